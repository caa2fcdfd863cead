"""Immutable Gemini-style 3D torus: routers, blades, nodes, connections, links.

Router ids are ordinal with z varying fastest: ``rid = (x * Y + y) * Z + z``.
A blade ``(x, y, k)`` holds the two Z-adjacent routers ``(x, y, 2k)`` and
``(x, y, 2k + 1)``; each router carries two nodes (``2 * rid`` and
``2 * rid + 1``).

Links are numbered from the "+" side of each connection, 20 per router
(X+ 0-7, Y+ 8-11, Z+ 12-19), so a torus of R routers has ``20 * R`` links.
Within a router the 40 link endpoints use the local layout X+ 0-7, X- 8-15,
Y+ 16-19, Y- 20-23, Z+ 24-31, Z- 32-39.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class InvalidDims(ValueError):
    pass


class MalformedCname(ValueError):
    def __init__(self, text: str, offset: int, why: str):
        super().__init__(f"malformed cname {text!r} at byte {offset}: {why}")
        self.text = text
        self.offset = offset
        self.why = why


class Direction(enum.IntEnum):
    XP = 0
    XM = 1
    YP = 2
    YM = 3
    ZP = 4
    ZM = 5

    @property
    def dim(self) -> int:
        return self.value // 2

    @property
    def sign(self) -> int:
        return 1 if self.value % 2 == 0 else -1

    @property
    def opposite(self) -> "Direction":
        return Direction(self.value ^ 1)

    @property
    def label(self) -> str:
        return "XYZ"[self.dim] + ("+" if self.sign > 0 else "-")

    @property
    def width(self) -> int:
        """Links per connection in this direction."""
        return 4 if self.dim == 1 else 8

    @property
    def local_offset(self) -> int:
        return LOCAL_OFFSETS[self.value]

    @classmethod
    def parse(cls, text: str) -> "Direction":
        try:
            return _BY_LABEL[text.strip().replace("−", "-")]
        except KeyError:
            raise ValueError(f"unknown direction {text!r}") from None

    def __str__(self) -> str:
        return self.label


DIRECTIONS = tuple(Direction)
LOCAL_OFFSETS = (0, 8, 16, 20, 24, 32)
# offset of each "+" connection inside a router's 20-link global block
_PLUS_BLOCK = {0: 0, 1: 8, 2: 12}
LINKS_PER_ROUTER = 40
_BY_LABEL = {d.label: d for d in Direction}


def local_index_direction(local: int) -> tuple[Direction, int]:
    """Map a router-local link index (0-39) to (direction, index in connection)."""
    if not 0 <= local < LINKS_PER_ROUTER:
        raise ValueError(f"link index {local} out of range")
    for d in reversed(DIRECTIONS):
        if local >= d.local_offset:
            return d, local - d.local_offset
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class TorusDims:
    x: int
    y: int
    z: int

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 4:
                raise InvalidDims(f"dimension {name}={v!r} must be an integer >= 4")
        if self.z % 2:
            raise InvalidDims(f"z={self.z} must be even (blades pair routers along Z)")

    @classmethod
    def parse(cls, text: str) -> "TorusDims":
        parts = text.lower().replace(",", "x").split("x")
        if len(parts) != 3:
            raise InvalidDims(f"expected <x>x<y>x<z>, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError:
            raise InvalidDims(f"expected <x>x<y>x<z>, got {text!r}") from None

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.x, self.y, self.z)

    def __str__(self) -> str:
        return f"{self.x}x{self.y}x{self.z}"


@dataclass(frozen=True, order=True)
class Coord:
    x: int
    y: int
    z: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.x, self.y, self.z)


def neighbor(dims: TorusDims, coord: Coord, direction: Direction) -> Coord:
    c = list(coord.as_tuple())
    size = dims.as_tuple()[direction.dim]
    c[direction.dim] = (c[direction.dim] + direction.sign) % size
    return Coord(*c)


def torus_distance(size: int, a: int, b: int) -> int:
    d = (b - a) % size
    return min(d, size - d)


@dataclass(frozen=True)
class ComponentRef:
    """A parsed cname.  ``kind`` is one of blade, router, node, link.

    ``g`` is the gemini (router) within the blade, ``n`` the node within the
    blade (0-3) and ``l`` the router-local link index (0-39).
    """

    kind: str
    x: int
    y: int
    k: int
    g: int | None = None
    n: int | None = None
    l: int | None = None

    @property
    def router_z(self) -> int:
        if self.g is None:
            raise ValueError(f"{self.kind} reference has no router")
        return 2 * self.k + self.g

    @property
    def router_coord(self) -> Coord:
        return Coord(self.x, self.y, self.router_z)


def format_cname(ref: ComponentRef) -> str:
    cage, slot = divmod(ref.k, 4)
    base = f"c{ref.x}-{ref.y}c{cage}s{slot}"
    if ref.kind == "blade":
        return base
    if ref.kind == "node":
        return f"{base}n{ref.n}"
    if ref.kind == "router":
        return f"{base}g{ref.g}"
    if ref.kind == "link":
        return f"{base}g{ref.g}l{ref.l:02d}"
    raise ValueError(f"unknown component kind {ref.kind!r}")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.raw = text.encode("utf-8")
        self.pos = 0

    def fail(self, why: str, at: int | None = None):
        raise MalformedCname(self.text, self.pos if at is None else at, why)

    def expect(self, ch: str):
        if self.pos >= len(self.raw) or self.raw[self.pos] != ord(ch):
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def peek(self) -> str | None:
        return chr(self.raw[self.pos]) if self.pos < len(self.raw) else None

    def number(self, exact_width: int | None = None) -> tuple[int, int]:
        start = self.pos
        while self.pos < len(self.raw) and 0x30 <= self.raw[self.pos] <= 0x39:
            self.pos += 1
        digits = self.raw[start:self.pos].decode()
        if not digits:
            self.fail("expected digit")
        if exact_width is not None:
            if len(digits) != exact_width:
                self.fail(f"expected exactly {exact_width} digits", start)
        elif len(digits) > 1 and digits[0] == "0":
            self.fail("leading zero", start)
        return int(digits), start


def parse_cname(text: str, dims: TorusDims | None = None) -> ComponentRef:
    """Parse ``c<x>-<y>c<cage>s<slot>[g<g>[l<nn>]|n<n>]``.

    With ``dims`` given, coordinates are also bounds-checked.
    """
    s = _Scanner(text)
    s.expect("c")
    x, x_at = s.number()
    s.expect("-")
    y, y_at = s.number()
    s.expect("c")
    cage, cage_at = s.number()
    s.expect("s")
    slot, slot_at = s.number()
    if slot > 3:
        s.fail("slot must be 0-3", slot_at)
    k = cage * 4 + slot
    if dims is not None:
        if x >= dims.x:
            s.fail(f"x={x} outside torus", x_at)
        if y >= dims.y:
            s.fail(f"y={y} outside torus", y_at)
        if k >= dims.z // 2:
            s.fail(f"cage/slot {cage}/{slot} outside torus", cage_at)
    kind, g, n, l = "blade", None, None, None
    nxt = s.peek()
    if nxt == "g":
        s.pos += 1
        g, g_at = s.number()
        if g > 1:
            s.fail("gemini must be 0 or 1", g_at)
        kind = "router"
        if s.peek() == "l":
            s.pos += 1
            l, l_at = s.number(exact_width=2)
            if l >= LINKS_PER_ROUTER:
                s.fail("link index must be 00-39", l_at)
            kind = "link"
    elif nxt == "n":
        s.pos += 1
        n, n_at = s.number()
        if n > 3:
            s.fail("node must be 0-3", n_at)
        kind = "node"
    if s.pos != len(s.raw):
        s.fail("trailing characters")
    return ComponentRef(kind, x, y, k, g, n, l)


@dataclass(frozen=True)
class Connection:
    owner: int
    dir: Direction
    links: tuple[int, ...]
    peer: int


@dataclass(frozen=True)
class Link:
    id: int
    endpoints: tuple[tuple[int, Direction, int], tuple[int, Direction, int]]
    lanes: int = 3


@dataclass(frozen=True)
class Router:
    id: int
    coord: Coord
    blade_id: int
    connections: dict[Direction, Connection] = field(repr=False)
    nic_count: int = 2


@dataclass(frozen=True)
class Blade:
    id: int
    asics: tuple[int, int]
    nodes: tuple[int, int, int, int]


class Topology:
    """Read-only torus model.  Safe to share across threads once built."""

    def __init__(self, dims: TorusDims):
        self.dims = dims
        X, Y, Z = dims.as_tuple()
        self.n_routers = X * Y * Z
        self.n_blades = self.n_routers // 2
        self.n_nodes = 2 * self.n_routers
        self.n_links = 20 * self.n_routers

        rid = np.arange(self.n_routers)
        self.coords = np.stack([rid // (Y * Z), (rid // Z) % Y, rid % Z], axis=1)
        self.coords.setflags(write=False)

        nbr = np.empty((self.n_routers, 6), dtype=np.int64)
        sizes = np.array([X, Y, Z])
        for d in DIRECTIONS:
            c = self.coords.copy()
            c[:, d.dim] = (c[:, d.dim] + d.sign) % sizes[d.dim]
            nbr[:, d] = self._rid_array(c)
        nbr.setflags(write=False)
        self.nbr = nbr

        # global link ids of each (router, direction) connection
        conn_links: list[list[np.ndarray]] = []
        plus = {}
        for d in (Direction.XP, Direction.YP, Direction.ZP):
            base = rid * 20 + _PLUS_BLOCK[d.dim]
            plus[d] = base[:, None] + np.arange(d.width)[None, :]
        for d in DIRECTIONS:
            if d.sign > 0:
                conn_links.append(plus[d])
            else:
                conn_links.append(plus[d.opposite][nbr[:, d]])
        self._conn_links = conn_links
        for arr in conn_links:
            arr.setflags(write=False)

    # -- ids and coordinates -------------------------------------------------
    def _rid_array(self, c: np.ndarray) -> np.ndarray:
        _, Y, Z = self.dims.as_tuple()
        return (c[:, 0] * Y + c[:, 1]) * Z + c[:, 2]

    def rid(self, coord: Coord) -> int:
        X, Y, Z = self.dims.as_tuple()
        if not (0 <= coord.x < X and 0 <= coord.y < Y and 0 <= coord.z < Z):
            raise ValueError(f"{coord} outside {self.dims}")
        return (coord.x * Y + coord.y) * Z + coord.z

    def coord(self, rid: int) -> Coord:
        return Coord(*(int(v) for v in self.coords[rid]))

    def neighbor_rid(self, rid: int, d: Direction) -> int:
        return int(self.nbr[rid, d])

    def connection_links(self, rid: int, d: Direction) -> np.ndarray:
        return self._conn_links[d][rid]

    def link_id(self, rid: int, d: Direction, index: int) -> int:
        if not 0 <= index < d.width:
            raise ValueError(f"{d} connection has {d.width} links, got index {index}")
        return int(self._conn_links[d][rid, index])

    def link_id_local(self, rid: int, local: int) -> int:
        d, i = local_index_direction(local)
        return self.link_id(rid, d, i)

    def link_endpoints(self, lid: int) -> tuple[tuple[int, Direction, int], tuple[int, Direction, int]]:
        """Both ends of a link as (router, direction, router-local index)."""
        owner, off = divmod(lid, 20)
        if off < 8:
            d, i = Direction.XP, off
        elif off < 12:
            d, i = Direction.YP, off - 8
        else:
            d, i = Direction.ZP, off - 12
        peer = int(self.nbr[owner, d])
        return (owner, d, d.local_offset + i), (peer, d.opposite, d.opposite.local_offset + i)

    def link_connection(self, lid: int) -> tuple[int, Direction]:
        (owner, d, _), _ = self.link_endpoints(lid)
        return owner, d

    # -- blades and nodes ----------------------------------------------------
    def blade_of(self, rid: int) -> int:
        return rid // 2

    def blade_routers(self, bid: int) -> tuple[int, int]:
        return (2 * bid, 2 * bid + 1)

    def blade_nodes(self, bid: int) -> tuple[int, int, int, int]:
        return tuple(range(4 * bid, 4 * bid + 4))  # type: ignore[return-value]

    def router_of_node(self, node: int) -> int:
        return node // 2

    def router_nodes(self, rid: int) -> tuple[int, int]:
        return (2 * rid, 2 * rid + 1)

    def blade_links(self, bid: int) -> list[int]:
        """Distinct links incident to either router of the blade."""
        seen: dict[int, None] = {}
        for r in self.blade_routers(bid):
            for d in DIRECTIONS:
                for lid in self._conn_links[d][r]:
                    seen[int(lid)] = None
        return list(seen)

    # -- views ---------------------------------------------------------------
    def connection(self, rid: int, d: Direction) -> Connection:
        return Connection(rid, d, tuple(int(v) for v in self._conn_links[d][rid]), int(self.nbr[rid, d]))

    def router(self, rid: int) -> Router:
        return Router(rid, self.coord(rid), self.blade_of(rid), {d: self.connection(rid, d) for d in DIRECTIONS})

    def link(self, lid: int) -> Link:
        return Link(lid, self.link_endpoints(lid))

    def blade(self, bid: int) -> Blade:
        return Blade(bid, self.blade_routers(bid), self.blade_nodes(bid))

    # -- cnames --------------------------------------------------------------
    def router_ref(self, rid: int) -> ComponentRef:
        x, y, z = (int(v) for v in self.coords[rid])
        return ComponentRef("router", x, y, z // 2, g=z % 2)

    def router_cname(self, rid: int) -> str:
        return format_cname(self.router_ref(rid))

    def blade_cname(self, bid: int) -> str:
        x, y, z = (int(v) for v in self.coords[2 * bid])
        return format_cname(ComponentRef("blade", x, y, z // 2))

    def node_cname(self, node: int) -> str:
        bid, n = divmod(node, 4)
        x, y, z = (int(v) for v in self.coords[2 * bid])
        return format_cname(ComponentRef("node", x, y, z // 2, n=n))

    def link_cname(self, rid: int, local: int) -> str:
        ref = self.router_ref(rid)
        return format_cname(ComponentRef("link", ref.x, ref.y, ref.k, ref.g, l=local))

    def link_cname_at(self, lid: int, end: int = 0) -> str:
        r, _, local = self.link_endpoints(lid)[end]
        return self.link_cname(r, local)

    def resolve(self, text: str) -> tuple[ComponentRef, int]:
        """Parse a cname and return it with the ordinal of the component it names.

        Links resolve to the global link id, nodes to the node id, routers to
        the router id and blades to the blade id.
        """
        ref = parse_cname(text, self.dims)
        if ref.kind == "blade":
            return ref, self.rid(Coord(ref.x, ref.y, 2 * ref.k)) // 2
        if ref.kind == "node":
            return ref, 4 * (self.rid(Coord(ref.x, ref.y, 2 * ref.k)) // 2) + ref.n
        rid = self.rid(ref.router_coord)
        if ref.kind == "router":
            return ref, rid
        return ref, self.link_id_local(rid, ref.l)

    def dump(self) -> Iterator[str]:
        """``<kind>,<cname>,<x>,<y>,<z>`` lines for every component."""
        for rid in range(self.n_routers):
            x, y, z = (int(v) for v in self.coords[rid])
            yield f"router,{self.router_cname(rid)},{x},{y},{z}"
        for bid in range(self.n_blades):
            x, y, z = (int(v) for v in self.coords[2 * bid])
            yield f"blade,{self.blade_cname(bid)},{x},{y},{z}"
        for node in range(self.n_nodes):
            x, y, z = (int(v) for v in self.coords[node // 2])
            yield f"node,{self.node_cname(node)},{x},{y},{z}"
        for lid in range(self.n_links):
            (r, _, local), _ = self.link_endpoints(lid)
            x, y, z = (int(v) for v in self.coords[r])
            yield f"link,{self.link_cname(r, local)},{x},{y},{z}"


def build_topology(dims: TorusDims | tuple[int, int, int]) -> Topology:
    if not isinstance(dims, TorusDims):
        dims = TorusDims(*dims)
    return Topology(dims)

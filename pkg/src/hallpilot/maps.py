"""Bundled corridor maps in the world file format."""

from __future__ import annotations

from .simworld import WorldMap, load_world

STRAIGHT = """\
# straight corridor, 2 m wide, 60 m long
W 0 0 60 0   184 150 112
W 0 2 60 2   184 150 112
W 0 0 0 2    150 84 72
W 60 0 60 2  150 84 72
C 1 1
C 59 1
S 1 1 0
"""

RECT_LOOP = """\
# rectangular ring corridor, 3 m wide, chamfered outer corners
W 2.5 0 11.5 0    184 150 112
W 11.5 0 14 2.5   168 132 96
W 14 2.5 14 8.5   184 150 112
W 14 8.5 11.5 11  168 132 96
W 11.5 11 2.5 11  184 150 112
W 2.5 11 0 8.5    168 132 96
W 0 8.5 0 2.5     184 150 112
W 0 2.5 2.5 0     168 132 96
W 3 3 11 3        120 136 160
W 11 3 11 8       120 136 160
W 11 8 3 8        120 136 160
W 3 8 3 3         120 136 160
C 1.5 1.5
C 12.5 1.5
C 12.5 9.5
C 1.5 9.5
C 1.5 1.5
S 4 1.5 0
"""

L_TURN = """\
# L-shaped corridor, 2 m wide: east leg then north leg
W 0 0 12 0    184 150 112
W 12 0 12 12  184 150 112
W 0 2 10 2    120 136 160
W 10 2 10 12  120 136 160
W 0 0 0 2     150 84 72
W 10 12 12 12 150 84 72
C 1 1
C 11 1
C 11 11
S 1 1 0
"""

WORLD_TEXTS = {
    "straight": STRAIGHT,
    "rect_loop": RECT_LOOP,
    "l_turn": L_TURN,
}


def get_map(name: str) -> WorldMap:
    """Load a bundled map by name."""
    if name not in WORLD_TEXTS:
        raise KeyError(f"unknown map {name!r}; have {sorted(WORLD_TEXTS)}")
    world = load_world(WORLD_TEXTS[name])
    world.name = name
    return world


def load_map_or_path(spec: str) -> WorldMap:
    """Resolve a bundled map name, falling back to a world file path."""
    if spec in WORLD_TEXTS:
        return get_map(spec)
    with open(spec, "r", encoding="utf-8") as fh:
        world = load_world(fh.read())
    world.name = spec
    return world

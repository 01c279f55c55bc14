"""Single-truck route improvement by a short tabu search.

A route string is ``depot, day customers, [R], night customers, depot`` where
``R`` marks the recharge at the depot between shifts. It appears only for
electric trucks with a non-empty night segment. Moves are node-swap, insert
(possibly across ``R``) and 2-opt within a segment. The search compares strings
by ``(constraint excess, travel time)`` so that a feasible string always beats
an infeasible one.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .model import Engine, Instance, Shift, route_travel_time

RECHARGE = -1

DAY, NIGHT = 0, 1


@dataclass(frozen=True)
class RouteString:
    engine: Engine
    depot: int
    day: tuple[int, ...] = ()
    night: tuple[int, ...] = ()

    def nodes(self) -> tuple[int, ...]:
        if self.engine is Engine.ELECTRIC and self.night:
            return (self.depot, *self.day, RECHARGE, *self.night, self.depot)
        return (self.depot, *self.day, self.depot)

    def __len__(self) -> int:
        return len(self.nodes())

    def customers(self) -> tuple[int, ...]:
        return self.day + self.night


class RouteResult(NamedTuple):
    route: RouteString
    day_time: int
    night_time: int
    feasible: bool


def tabu_tenure(length: int) -> int:
    return max(1, round(math.sqrt(length)))


def iteration_cap(length: int) -> int:
    return math.ceil(math.sqrt(2 * length))


@dataclass
class TabuState:
    tenure: int
    cap: int
    entries: deque = field(default_factory=deque)
    iteration: int = 0
    best_score: tuple | None = None

    @classmethod
    def for_length(cls, length: int) -> "TabuState":
        t = tabu_tenure(length)
        return cls(t, iteration_cap(length), deque(maxlen=t))

    def is_tabu(self, ids) -> bool:
        return not frozenset().union(*self.entries).isdisjoint(ids)

    def push(self, ids) -> None:
        self.entries.append(frozenset(ids))
        self.iteration += 1

    def listed(self) -> list[int]:
        return sorted(set().union(*self.entries)) if self.entries else []


class _Context:
    """Per-search constants: matrices, limits and which customers may go to night."""

    def __init__(self, instance: Instance, engine: Engine, eligible):
        self.instance = instance
        self.engine = engine
        self.depot = instance.depot
        self.mats = (instance.travel_day, instance.travel_night)
        self.volume = instance.volume
        self.service = instance.service_time
        self.use_service = instance.include_service_in_range
        self.cap = instance.trucks.capacity(engine)
        self.range = instance.trucks.range(engine)
        if engine is Engine.ELECTRIC:
            self.eligible = frozenset(eligible) & instance.ohd_set
        else:
            self.eligible = frozenset()

    def excess(self, times, loads, services) -> int:
        ex = 0
        for s in (DAY, NIGHT):
            if loads[s] > self.cap:
                ex += loads[s] - self.cap
            dur = times[s] + (services[s] if self.use_service else 0)
            if dur > self.range:
                ex += dur - self.range
        return ex

    def evaluate(self, segs):
        times = tuple(_path_time(self.mats[s], self.depot, segs[s]) for s in (DAY, NIGHT))
        loads = tuple(sum(self.volume[c] for c in segs[s]) for s in (DAY, NIGHT))
        services = tuple(sum(self.service[c] for c in segs[s]) for s in (DAY, NIGHT))
        return times, loads, services

    def score(self, times, loads, services):
        return (self.excess(times, loads, services), times[DAY] + times[NIGHT])


def _path_time(mat, depot, seg) -> int:
    if not seg:
        return 0
    t = mat[depot][seg[0]]
    for a, b in zip(seg, seg[1:]):
        t += mat[a][b]
    return t + mat[seg[-1]][depot]


def _nearest_neighbor(mat, depot, nodes) -> list[int]:
    left = sorted(nodes)
    out = []
    cur = depot
    while left:
        nxt = min(left, key=lambda c: (mat[cur][c], c))
        out.append(nxt)
        left.remove(nxt)
        cur = nxt
    return out


def initial_route(instance: Instance, engine: Engine, customers, ohd_eligible=()) -> RouteString:
    """Nearest-neighbour start string.

    Electric trucks compare an all-day tour with a split where the eligible
    customers form a nearest-neighbour night tour; the split wins only if it
    scores strictly better. The day segment is never left empty.
    """
    ctx = _Context(instance, engine, ohd_eligible)
    customers = sorted(set(customers))
    depot = instance.depot
    all_day = RouteString(engine, depot, tuple(_nearest_neighbor(instance.travel_day, depot, customers)))
    eligible = sorted(ctx.eligible & set(customers))
    if not eligible:
        return all_day
    fixed = [c for c in customers if c not in ctx.eligible]
    night_nodes = eligible
    if not fixed:
        first = min(eligible, key=lambda c: (instance.travel_day[depot][c], c))
        fixed = [first]
        night_nodes = [c for c in eligible if c != first]
    split = RouteString(engine, depot,
                        tuple(_nearest_neighbor(instance.travel_day, depot, fixed)),
                        tuple(_nearest_neighbor(instance.travel_night, depot, night_nodes)))
    if ctx.score(*ctx.evaluate((split.day, split.night))) < ctx.score(*ctx.evaluate((all_day.day, all_day.night))):
        return split
    return all_day


def _prefix(mat, path):
    fwd = [0]
    rev = [0]
    for a, b in zip(path, path[1:]):
        fwd.append(fwd[-1] + mat[a][b])
        rev.append(rev[-1] + mat[b][a])
    return fwd, rev


def _moves(ctx: _Context, segs, times, loads, services):
    """Yield ``(kind, moved_ids, new_times, new_loads, new_services, spec)`` for every move."""
    d = ctx.depot
    V, S = ctx.volume, ctx.service
    paths = [[d, *segs[DAY], d], [d, *segs[NIGHT], d]]
    night_open = ctx.engine is Engine.ELECTRIC and bool(ctx.eligible)
    seg_ids = (DAY, NIGHT) if night_open else (DAY,)
    positions = [(s, i) for s in seg_ids for i in range(1, len(paths[s]) - 1)]

    t_day, t_night = times

    def with_delta(base, s, delta):
        return (base[0] + delta, base[1]) if s == DAY else (base[0], base[1] + delta)

    # node-swap
    for x in range(len(positions)):
        s1, i = positions[x]
        p1, m1 = paths[s1], ctx.mats[s1]
        a = p1[i]
        for y in range(x + 1, len(positions)):
            s2, j = positions[y]
            p2, m2 = paths[s2], ctx.mats[s2]
            b = p2[j]
            if s1 == s2:
                if j == i + 1:
                    delta = (m1[p1[i - 1]][b] + m1[b][a] + m1[a][p1[j + 1]]
                             - m1[p1[i - 1]][a] - m1[a][b] - m1[b][p1[j + 1]])
                else:
                    delta = (m1[p1[i - 1]][b] + m1[b][p1[i + 1]] + m1[p1[j - 1]][a] + m1[a][p1[j + 1]]
                             - m1[p1[i - 1]][a] - m1[a][p1[i + 1]] - m1[p1[j - 1]][b] - m1[b][p1[j + 1]])
                nt = (t_day + delta, t_night) if s1 == DAY else (t_day, t_night + delta)
                yield ("swap", (a, b), nt, loads, services, (s1, i, s2, j))
            else:
                if (s1 == NIGHT and b not in ctx.eligible) or (s2 == NIGHT and a not in ctx.eligible):
                    continue
                d1 = m1[p1[i - 1]][b] + m1[b][p1[i + 1]] - m1[p1[i - 1]][a] - m1[a][p1[i + 1]]
                d2 = m2[p2[j - 1]][a] + m2[a][p2[j + 1]] - m2[p2[j - 1]][b] - m2[b][p2[j + 1]]
                nt = with_delta(with_delta(times, s1, d1), s2, d2)
                nl = with_delta(with_delta(loads, s1, V[b] - V[a]), s2, V[a] - V[b])
                ns = with_delta(with_delta(services, s1, S[b] - S[a]), s2, S[a] - S[b])
                yield ("swap", (a, b), nt, nl, ns, (s1, i, s2, j))

    # insert
    for s1, i in positions:
        p1, m1 = paths[s1], ctx.mats[s1]
        a = p1[i]
        if s1 == DAY and len(p1) == 3:
            continue  # would empty the day segment
        removal = m1[p1[i - 1]][p1[i + 1]] - m1[p1[i - 1]][a] - m1[a][p1[i + 1]]
        for s2 in seg_ids:
            if s2 == NIGHT and a not in ctx.eligible:
                continue
            m2 = ctx.mats[s2]
            if s2 == s1:
                # reduced path r = p1 without index i; r[k] = p1[k] for k < i, p1[k+1] otherwise
                n_r = len(p1) - 1
                for g in range(1, n_r):
                    if g == i:
                        continue
                    u = p1[g - 1] if g - 1 < i else p1[g]
                    w = p1[g] if g < i else p1[g + 1]
                    delta = removal + m1[u][a] + m1[a][w] - m1[u][w]
                    nt = (t_day + delta, t_night) if s1 == DAY else (t_day, t_night + delta)
                    yield ("insert", (a,), nt, loads, services, (s1, i, s2, g))
            else:
                p2 = paths[s2]
                t1 = with_delta(times, s1, removal)
                l1 = with_delta(with_delta(loads, s1, -V[a]), s2, V[a])
                sv1 = with_delta(with_delta(services, s1, -S[a]), s2, S[a])
                for g in range(1, len(p2)):
                    u, w = p2[g - 1], p2[g]
                    delta = m2[u][a] + m2[a][w] - m2[u][w]
                    yield ("insert", (a,), with_delta(t1, s2, delta), l1, sv1, (s1, i, s2, g))

    # 2-opt within a segment
    for s in seg_ids:
        p, m = paths[s], ctx.mats[s]
        fwd, rev = _prefix(m, p)
        last = len(p) - 2
        on_day = s == DAY
        for i in range(1, last):
            for j in range(i + 1, last + 1):
                delta = (m[p[i - 1]][p[j]] + m[p[i]][p[j + 1]] + (rev[j] - rev[i])
                         - m[p[i - 1]][p[i]] - m[p[j]][p[j + 1]] - (fwd[j] - fwd[i]))
                nt = (t_day + delta, t_night) if on_day else (t_day, t_night + delta)
                yield ("2opt", (p[i], p[j]), nt, loads, services, (s, i, s, j))


def _apply(segs, kind, spec):
    out = [list(segs[DAY]), list(segs[NIGHT])]
    s1, i, s2, j = spec
    if kind == "swap":
        out[s1][i - 1], out[s2][j - 1] = out[s2][j - 1], out[s1][i - 1]
    elif kind == "insert":
        a = out[s1].pop(i - 1)
        out[s2].insert(j - 1, a)
    else:
        out[s1][i - 1:j] = reversed(out[s1][i - 1:j])
    return tuple(out[DAY]), tuple(out[NIGHT])


def neighbors(instance: Instance, route: RouteString, ohd_eligible=(),
              tabu_state: TabuState | None = None, kinds=("swap", "insert", "2opt")) -> set[RouteString]:
    """All strings one admissible move of the given ``kinds`` away from ``route``."""
    ctx = _Context(instance, route.engine, ohd_eligible)
    segs = (route.day, route.night)
    state = ctx.evaluate(segs)
    out = set()
    for kind, ids, nt, nl, ns, spec in _moves(ctx, segs, *state):
        if kind not in kinds:
            continue
        if tabu_state is not None and tabu_state.is_tabu(ids):
            best = tabu_state.best_score
            if best is None or not ctx.score(nt, nl, ns) < best:
                continue
        day, night = _apply(segs, kind, spec)
        out.add(RouteString(route.engine, route.depot, day, night))
    return out


def string_excess(instance: Instance, route: RouteString, ohd_eligible=()) -> int:
    ctx = _Context(instance, route.engine, ohd_eligible)
    return ctx.excess(*ctx.evaluate((route.day, route.night)))


def tabu_search_route(instance: Instance, engine: Engine, customers, ohd_eligible=(),
                      seed: int | None = None, trace: list | None = None) -> RouteResult:
    """Improve the nearest-neighbour string for at most ``ceil(sqrt(2|L|))`` iterations.

    Each iteration moves to the best admissible neighbour, even if it is worse
    than the current string. Moved location ids stay tabu for ``round(sqrt(|L|))``
    iterations unless the move beats the best score found so far. Ties between
    equally good moves go to the first one enumerated, or to a seeded random
    pick when ``seed`` is given.
    """
    customers = tuple(customers)
    if not customers:
        return RouteResult(RouteString(engine, instance.depot), 0, 0, True)
    ctx = _Context(instance, engine, ohd_eligible)
    start = initial_route(instance, engine, customers, ohd_eligible)
    length = len(start)
    tabu = TabuState.for_length(length)
    rng = random.Random(seed) if seed is not None else None

    segs = (start.day, start.night)
    state = ctx.evaluate(segs)
    cur_score = ctx.score(*state)
    best_segs, best_score = segs, cur_score
    tabu.best_score = best_score
    if trace is not None:
        trace.append({"iteration": 0, "move": None, "moved": (), "score": cur_score,
                      "best": best_score, "length": length, "tenure": tabu.tenure,
                      "cap": tabu.cap, "tabu": []})

    cap, limit = ctx.cap, ctx.range
    use_service = ctx.use_service
    for it in range(1, tabu.cap + 1):
        chosen = None
        chosen_score = None
        ties = 0
        blocked = frozenset().union(*tabu.entries)
        for kind, ids, nt, nl, ns, spec in _moves(ctx, segs, *state):
            # inlined ctx.score: this loop dominates the solver's run time
            t0, t1 = nt
            ex = 0
            if nl[0] > cap:
                ex += nl[0] - cap
            if nl[1] > cap:
                ex += nl[1] - cap
            d0, d1 = (t0 + ns[0], t1 + ns[1]) if use_service else (t0, t1)
            if d0 > limit:
                ex += d0 - limit
            if d1 > limit:
                ex += d1 - limit
            sc = (ex, t0 + t1)
            if chosen is not None and (sc > chosen_score or (sc == chosen_score and rng is None)):
                continue
            if not blocked.isdisjoint(ids) and not sc < best_score:
                continue
            if chosen is None or sc < chosen_score:
                chosen, chosen_score, ties = (kind, ids, spec), sc, 1
            else:
                ties += 1
                if rng.randrange(ties) == 0:
                    chosen = (kind, ids, spec)
        if chosen is None:
            break
        kind, ids, spec = chosen
        segs = _apply(segs, kind, spec)
        state = ctx.evaluate(segs)
        cur_score = ctx.score(*state)
        tabu.push(ids)
        if cur_score < best_score:
            best_segs, best_score = segs, cur_score
            tabu.best_score = best_score
        if trace is not None:
            trace.append({"iteration": it, "move": kind, "moved": tuple(ids), "score": cur_score,
                          "best": best_score, "length": length, "tenure": tabu.tenure,
                          "cap": tabu.cap, "tabu": tabu.listed()})

    route = RouteString(engine, instance.depot, *best_segs)
    day_time = route_travel_time(instance, route.day, Shift.DAY)
    night_time = route_travel_time(instance, route.night, Shift.NIGHT)
    return RouteResult(route, day_time, night_time, best_score[0] == 0)

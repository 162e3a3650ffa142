"""Rule algebra for update families: the exact stable set, the
subcritical/critical/supercritical trichotomy, direction difficulties via the
band oracle, balancedness, droplet direction selection, and the handful of
derived constants (nu, alpha*, rho-hat, kappa) the droplet algorithms need.

Difficulty values are decided by bounded search and carry an explicit
INFINITE_WITHIN_WINDOW verdict when the search window is exhausted; nothing
in this module silently equates that verdict with a proof of infinity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from .geometry import (
    Arc,
    Direction,
    Site,
    UNormContext,
    arc_complement,
    arc_intersect,
    arc_union,
    ccw_key,
    closed_semicircle,
    cross,
    delta,
    direction_between,
    dot_sign,
    euclid,
    line_index,
    open_semicircle,
    site_instability_arc,
    sort_directions,
    u_norm,
)
from .lattice import (
    Box,
    HalfPlane,
    StripVerdict,
    StripUnresolvedError,
    Window,
    closure,
    strip_line_decision,
    strip_scan,
)


class EmptyFamilyError(ValueError):
    pass


class SearchBudgetExceededError(RuntimeError):
    pass


class DifficultyWindowExhaustedError(RuntimeError):
    pass


class StripHeightExceededError(RuntimeError):
    pass


class NotCriticalError(ValueError):
    pass


class NoDriftDirectionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# update families


@dataclass(frozen=True)
class UpdateFamily:
    """A finite list of finite rules X subset of Z^2 minus the origin; a site
    becomes infected when some rule, translated to it, is fully infected."""

    rules: tuple[frozenset, ...]
    name: str = ""

    @staticmethod
    def of(rules: Iterable[Iterable[Site]], name: str = "") -> "UpdateFamily":
        canon = []
        seen = set()
        for rule in rules:
            fr = frozenset((int(x), int(y)) for x, y in rule)
            if not fr:
                raise ValueError("empty update rule")
            if (0, 0) in fr:
                raise ValueError("update rule contains the origin")
            if fr not in seen:
                seen.add(fr)
                canon.append(fr)
        canon.sort(key=lambda fr: sorted(fr))
        return UpdateFamily(rules=tuple(canon), name=name)

    def transformed(self, m: tuple[int, int, int, int], name: str = "") -> "UpdateFamily":
        """Apply the integer linear map (x,y) -> (m0 x + m1 y, m2 x + m3 y)
        to every rule site.  Used for lattice-symmetry covariance tests."""
        a, b, c, d = m
        return UpdateFamily.of(
            [[(a * x + b * y, c * x + d * y) for x, y in rule] for rule in self.rules],
            name=name or self.name,
        )

    def all_sites(self) -> set[Site]:
        out = set()
        for rule in self.rules:
            out |= rule
        return out

    def __repr__(self):
        return f"UpdateFamily({self.name or len(self.rules)} rules={len(self.rules)})"


@lru_cache(maxsize=None)
def nu(U: UpdateFamily) -> float:
    """Range of the process: the largest distance within any rule plus the
    origin."""
    if not U.rules:
        raise EmptyFamilyError("nu of an empty family")
    best = 0.0
    for rule in U.rules:
        pts = list(rule) + [(0, 0)]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                best = max(best, euclid(pts[i], pts[j]))
    return best


def is_stable(u: Direction, U: UpdateFamily) -> bool:
    """True iff no rule fits inside the open half-plane H_u, equivalently
    every rule has a site with nonnegative inner product with u."""
    return all(any(dot_sign(x, u) >= 0 for x in rule) for rule in U.rules)


@dataclass(frozen=True)
class StableSet:
    """The stable directions as a normalized arc list (closed rational arcs
    and isolated directions)."""

    arcs: tuple[Arc, ...]

    def contains(self, d: Direction) -> bool:
        return any(a.contains(d) for a in self.arcs)

    def is_empty(self) -> bool:
        return not self.arcs

    def is_full(self) -> bool:
        return len(self.arcs) == 1 and self.arcs[0].full

    def isolated_points(self) -> list[Direction]:
        return [a.start for a in self.arcs if a.is_point()]

    def endpoint_directions(self) -> list[Direction]:
        out = []
        for a in self.arcs:
            if a.full:
                continue
            out.append(a.start)
            out.append(a.end)
        return sort_directions(out)

    def components(self) -> list[Arc]:
        return list(self.arcs)


def rule_instability_arc(rule: frozenset) -> list[Arc]:
    """Open arc of directions u with X entirely inside H_u (possibly empty)."""
    acc = [Arc.full_circle()]
    for x in rule:
        acc = arc_intersect(acc, [site_instability_arc(x)])
        if not acc:
            break
    return acc


def stable_set(U: UpdateFamily) -> StableSet:
    if not U.rules:
        raise EmptyFamilyError("stable set of an empty family")
    unstable: list[Arc] = []
    for rule in U.rules:
        unstable = arc_union(unstable, rule_instability_arc(rule))
    return StableSet(tuple(arc_complement(unstable)))


# ---------------------------------------------------------------------------
# difficulties


class _InfiniteWithinWindow:
    __slots__ = ()

    def __repr__(self):
        return "INFINITE_WITHIN_WINDOW"


INFINITE_WITHIN_WINDOW = _InfiniteWithinWindow()


@dataclass(frozen=True)
class DifficultyResult:
    """Outcome of a bounded difficulty search.

    value is an exact integer when a witness was found (then the witness is a
    voracious set of that cardinality), or INFINITE_WITHIN_WINDOW: a
    lower-bound verdict meaning no witness of cardinality up to
    searched_cardinality exists inside the search box, not a proof that the
    difficulty is infinite.
    """

    value: object
    window_radius: int
    witness: Optional[frozenset] = None
    searched_cardinality: int = 0
    plus: Optional["DifficultyResult"] = None
    minus: Optional["DifficultyResult"] = None

    @property
    def resolved(self) -> bool:
        return self.value is not INFINITE_WITHIN_WINDOW

    @property
    def alpha_bar(self):
        """min of the side difficulties (only meaningful on combined results)."""
        sides = [r.value for r in (self.plus, self.minus) if r is not None and r.resolved]
        if sides:
            return min(sides)
        return INFINITE_WITHIN_WINDOW


MAX_BAND_HEIGHT = 1024


def _line_decision(u: Direction, Z: frozenset, U: UpdateFamily, side: str) -> StripVerdict:
    """Band oracle with the default escalation policy: start at
    4*ceil(nu)*(|Z|+1) rows, double on BandExceeded up to MAX_BAND_HEIGHT."""
    h = 4 * math.ceil(nu(U)) * (len(Z) + 1)
    if Z:
        h = max(h, max(line_index(z, u) for z in Z) + 1)
    while True:
        v = strip_line_decision(u, Z, U, h, side=side)
        if v is not StripVerdict.BAND_EXCEEDED or h >= MAX_BAND_HEIGHT:
            return v
        h *= 2


def _half_sites(u: Direction, window: int) -> list[Site]:
    out = [
        (x, y)
        for x in range(-window, window + 1)
        for y in range(-window, window + 1)
        if line_index((x, y), u) >= 0
    ]
    out.sort()
    return out


def _canonical_translate(Z: tuple[Site, ...], u: Direction) -> frozenset:
    """Shift Z along the boundary line so the minimal line position lands in
    the fundamental domain [0, a^2 + b^2)."""
    a, b = u.a, u.b
    norm2 = a * a + b * b
    cmin = min(b * x - a * y for x, y in Z)
    k = cmin // norm2
    if k == 0:
        return frozenset(Z)
    return frozenset((x - k * b, y + k * a) for x, y in Z)


def _canonical_witnesses(u: Direction, window: int, k: int):
    """Translation-reduced candidate sets of size k in the search box, in the
    lexicographic order of the underlying combinations."""
    a, b = u.a, u.b
    norm2 = a * a + b * b
    sites = _half_sites(u, window)
    # (c, j) coordinates are a bijective relabeling of sites, so a sorted
    # tuple of them is a cheap dedup key under line translation
    cj = [(b * x - a * y, a * x + b * y) for x, y in sites]
    seen: set[tuple] = set()
    for combo in itertools.combinations(range(len(sites)), k):
        cmin = min(cj[i][0] for i in combo)
        shift = (cmin // norm2) * norm2
        key = tuple(sorted((cj[i][0] - shift, cj[i][1]) for i in combo))
        if key in seen:
            continue
        seen.add(key)
        steps = shift // norm2
        yield frozenset((sites[i][0] - steps * b, sites[i][1] + steps * a) for i in combo)


@lru_cache(maxsize=None)
def _difficulty_side_cached(U: UpdateFamily, u: Direction, side: str, window: int,
                            max_cardinality: int, candidate_cap: int) -> DifficultyResult:
    if not U.rules:
        raise EmptyFamilyError("difficulty of an empty family")
    if not is_stable(u, U):
        return DifficultyResult(0, window, frozenset(), 0)
    tested = 0
    for k in range(1, max_cardinality + 1):
        for Z in _canonical_witnesses(u, window, k):
            tested += 1
            if tested > candidate_cap:
                raise SearchBudgetExceededError(
                    f"difficulty search for u={u} exceeded {candidate_cap} candidates")
            if _line_decision(u, Z, U, side) is StripVerdict.INFINITE_LINE:
                return DifficultyResult(k, window, Z, k)
    return DifficultyResult(INFINITE_WITHIN_WINDOW, window, None, max_cardinality)


def difficulty_side(u: Direction, side: str, U: UpdateFamily, window: int = 8,
                    max_cardinality: int = 4, candidate_cap: int = 10 ** 6) -> DifficultyResult:
    """Minimal cardinality of a set Z in the radius-``window`` box, disjoint
    from H_u, such that the half-plane plus Z infects infinitely many sites
    of the boundary ray on the given side ('plus' is rightward looking along
    u)."""
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    return _difficulty_side_cached(U, u, side, window, max_cardinality, candidate_cap)


def difficulty(u: Direction, U: UpdateFamily, window: int = 8,
               max_cardinality: int = 4, candidate_cap: int = 10 ** 6) -> DifficultyResult:
    """Difficulty of the direction u: the minimum of the two side values when
    both are finite, INFINITE_WITHIN_WINDOW otherwise."""
    p = difficulty_side(u, "plus", U, window, max_cardinality, candidate_cap)
    m = difficulty_side(u, "minus", U, window, max_cardinality, candidate_cap)
    if p.resolved and m.resolved:
        best = p if p.value <= m.value else m
        return DifficultyResult(best.value, window, best.witness,
                                max(p.searched_cardinality, m.searched_cardinality), p, m)
    return DifficultyResult(INFINITE_WITHIN_WINDOW, window, None,
                            max(p.searched_cardinality, m.searched_cardinality), p, m)


# ---------------------------------------------------------------------------
# classification


class Kind(Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


@dataclass
class Classification:
    kind: Kind
    stable: StableSet
    window: int
    alpha: Optional[int] = None
    balanced: Optional[bool] = None
    u_star: Optional[Direction] = None
    droplet_directions: tuple[Direction, ...] = ()
    drift: bool = False
    difficulties: dict = field(default_factory=dict)
    balanced_witness: Optional[Direction] = None

    def __repr__(self):
        bits = [self.kind.value]
        if self.kind is Kind.CRITICAL:
            bits.append(f"alpha={self.alpha}")
            bits.append("balanced" if self.balanced else "unbalanced")
            if self.drift:
                bits.append("drift")
            if self.u_star is not None:
                bits.append(f"u*={self.u_star}")
        return "Classification(" + ", ".join(bits) + ")"


def _sweep_candidates(S: StableSet) -> list[Direction]:
    """Boundary directions at which the combinatorics of semicircle
    intersections with S can change: arc endpoints, their antipodes, and one
    sample inside each gap between consecutive such events."""
    pts = set(S.endpoint_directions())
    pts |= {d.neg() for d in pts}
    cand = sort_directions(pts)
    if not cand:
        return [Direction(1, 0), Direction(0, 1), Direction(-1, 0), Direction(0, -1)]
    out = list(cand)
    n = len(cand)
    for i in range(n):
        out.append(direction_between(cand[i], cand[(i + 1) % n]))
    return sort_directions(out)


def _arc_pieces(S: StableSet, window_arc: Arc) -> tuple[list[Direction], bool]:
    """Intersect S with a semicircle; return (isolated directions inside,
    whether any non-degenerate piece intersects)."""
    inter = arc_intersect(list(S.arcs), [window_arc])
    pts = []
    has_arc = False
    for piece in inter:
        if piece.is_point():
            pts.append(piece.start)
        else:
            has_arc = True
    return pts, has_arc


def _cert_at_least(U, u, threshold, window, candidate_cap) -> tuple[bool, DifficultyResult, DifficultyResult]:
    """Within-window certificate that alpha(u) >= threshold: no witness of
    cardinality <= threshold-1 on both sides simultaneously."""
    p = difficulty_side(u, "plus", U, window, threshold - 1, candidate_cap)
    m = difficulty_side(u, "minus", U, window, threshold - 1, candidate_cap)
    return not (p.resolved and m.resolved), p, m


def _alpha_bar_at_least(U, u, threshold, window, candidate_cap) -> bool:
    """Within-window certificate that both side difficulties are >= threshold."""
    for side in ("plus", "minus"):
        r = difficulty_side(u, side, U, window, threshold - 1, candidate_cap)
        if r.resolved and r.value < threshold:
            return False
    return True


def _interior_sample(arc: Arc) -> Direction:
    if arc.start == arc.end:  # punctured circle
        return arc.start.perp()
    return direction_between(arc.start, arc.end)


def _gap_is_wide(p: Direction, q: Direction) -> bool:
    """ccw gap from p to q is at least pi."""
    return ccw_key(p, q) >= Direction(-1, 0).angle_key()


def _select_balanced_directions(U, S, alpha, window, candidate_cap) -> list[Direction]:
    """A finite set of stable directions, each with both side difficulties at
    least alpha, meeting every open semicircle (all angular gaps < pi)."""
    chosen: set[Direction] = set()
    for d in S.isolated_points():
        r = difficulty(d, U, window, max_cardinality=alpha, candidate_cap=candidate_cap)
        if not r.resolved or r.value >= alpha:
            chosen.add(d)
    interiors = []
    for a in S.components():
        if a.is_point() or a.full:
            continue
        interiors.append(a)
        chosen.add(_interior_sample(a))
    for a in S.components():
        if a.full:
            # whole circle stable: four axis interior samples suffice
            return [Direction(1, 0), Direction(0, 1), Direction(-1, 0), Direction(0, -1)]
    # endpoints qualify only if both sides check out
    for d in S.endpoint_directions():
        if d in chosen:
            continue
        if _alpha_bar_at_least(U, d, alpha, window, candidate_cap):
            chosen.add(d)

    for _ in range(200):
        order = sort_directions(chosen)
        wide = None
        n = len(order)
        for i in range(n):
            p, q = order[i], order[(i + 1) % n]
            if n == 1 or _gap_is_wide(p, q):
                wide = (p, q)
                break
        if wide is None:
            return order
        p, q = wide
        gap = Arc(p, q, False, False) if (n > 1 or p != q) else Arc(p, p, False, False)
        progressed = False
        for a in interiors:
            interior = Arc(a.start, a.end, False, False)
            inter = arc_intersect([interior], [gap])
            for piece in (inter[:1] + inter[-1:]):
                s = piece.start if piece.is_point() else _interior_sample(piece)
                if s not in chosen:
                    chosen.add(s)
                    progressed = True
        if not progressed:
            raise DifficultyWindowExhaustedError(
                "cannot assemble droplet directions meeting every open semicircle")
    raise DifficultyWindowExhaustedError("droplet direction refinement did not converge")


def classify(U: UpdateFamily, window: int = 8, max_cardinality: int = 4,
             candidate_cap: int = 10 ** 6) -> Classification:
    """Full classification of an update family.

    The trichotomy and the stable set are exact.  Difficulty-derived fields
    (alpha, balancedness, u*, drift) rest on the bounded difficulty search
    and carry the window used; see DifficultyResult for the caveat.
    """
    S = stable_set(U)
    cls = Classification(kind=Kind.SUBCRITICAL, stable=S, window=window)

    if S.is_empty():
        cls.kind = Kind.SUPERCRITICAL
        return cls

    cand = _sweep_candidates(S)
    finite_cands = []  # (d, isolated pts strictly inside the open semicircle d -> -d)
    for d in cand:
        pts, has_arc = _arc_pieces(S, open_semicircle(d))
        if not pts and not has_arc:
            cls.kind = Kind.SUPERCRITICAL
            return cls
        if not has_arc:
            finite_cands.append((d, pts))

    if not finite_cands:
        cls.kind = Kind.SUBCRITICAL
        return cls

    cls.kind = Kind.CRITICAL

    # alpha by iterative deepening: the minimum over semicircles of the max
    # difficulty inside; a fully resolved semicircle at cap k beats every
    # semicircle containing an unresolved direction (those exceed k).
    alpha = None
    achieving: list[tuple[Direction, list[Direction]]] = []
    diffs: dict[Direction, DifficultyResult] = {}
    for cap in range(1, max_cardinality + 1):
        values = {}
        for d, pts in finite_cands:
            for p in pts:
                if p not in values:
                    values[p] = difficulty(p, U, window, cap, candidate_cap)
        resolved_maxima = []
        for d, pts in finite_cands:
            rs = [values[p] for p in pts]
            if all(r.resolved for r in rs):
                resolved_maxima.append((max(r.value for r in rs), d, pts))
        if resolved_maxima:
            alpha = min(m for m, _, _ in resolved_maxima)
            achieving = [(d, pts) for m, d, pts in resolved_maxima if m == alpha]
            diffs = values
            break
    if alpha is None:
        raise DifficultyWindowExhaustedError(
            f"no semicircle fully resolved at cardinality {max_cardinality}")
    cls.alpha = alpha
    cls.difficulties = diffs

    # balancedness: a closed semicircle whose stable content is isolated
    # points of difficulty <= alpha
    cls.balanced = False
    for d in cand:
        pts, has_arc = _arc_pieces(S, closed_semicircle(d))
        if has_arc:
            continue
        ok = True
        for p in pts:
            r = diffs.get(p) or difficulty(p, U, window, alpha, candidate_cap)
            diffs.setdefault(p, r)
            if not (r.resolved and r.value <= alpha):
                ok = False
                break
        if ok:
            cls.balanced = True
            cls.balanced_witness = d
            break

    if cls.balanced:
        cls.droplet_directions = tuple(
            _select_balanced_directions(U, S, alpha, window, candidate_cap))
        return cls

    # unbalanced: u* is the ccw end of a minimizing open semicircle whose
    # endpoints both certify difficulty >= alpha + 1
    pick = None
    for d, pts in achieving:
        ustar = d.neg()
        if not (S.contains(ustar) and S.contains(d)):
            continue
        ok1, p1, m1 = _cert_at_least(U, ustar, alpha + 1, window, candidate_cap)
        ok2, p2, m2 = _cert_at_least(U, d, alpha + 1, window, candidate_cap)
        if ok1 and ok2:
            pick = (d, pts, (p1, m1), (p2, m2))
            break
    if pick is None:
        raise DifficultyWindowExhaustedError(
            "unbalanced family but no antipodal stable pair certified above alpha")
    d, pts, star_sides, anti_sides = pick
    ustar = d.neg()
    cls.u_star = ustar

    drift = False
    for (p, m) in (star_sides, anti_sides):
        if p.resolved != m.resolved:
            drift = True
    cls.drift = drift

    # u^l / u^r: the attaining direction anchors one side with alpha_bar
    # exactly alpha; the other side takes any stable direction certified >=
    # alpha, preferring one close to the perpendicular of u*
    att = max(pts, key=lambda p: (diffs[p].value, p.angle_key()))
    att_side = 1 if cross(ustar, att) > 0 else -1

    def side_pool(sign: int) -> list[Direction]:
        pool = []
        for e in S.isolated_points():
            if cross(ustar, e) * sign > 0:
                r = diffs.get(e) or difficulty(e, U, window, alpha, candidate_cap)
                diffs.setdefault(e, r)
                if (not r.resolved) or r.value >= alpha:
                    pool.append(e)
        for a in S.components():
            if a.is_point():
                continue
            s = _interior_sample(a)
            if cross(ustar, s) * sign > 0:
                pool.append(s)
            for e in (a.start, a.end):
                if cross(ustar, e) * sign > 0 and _alpha_bar_at_least(U, e, alpha, window, candidate_cap):
                    pool.append(e)
        return pool

    perp_right = ustar.perp().neg()

    def closest_to(target: Direction, pool: Sequence[Direction]) -> Direction:
        def dist_key(e):
            k1, k2 = ccw_key(target, e), ccw_key(e, target)
            return (min(k1, k2), e.angle_key())
        return min(pool, key=dist_key)

    if att_side > 0:
        u_l = att
        pool = side_pool(-1)
        if not pool:
            raise DifficultyWindowExhaustedError("no stable direction right of u*")
        u_r = closest_to(perp_right, pool)
    else:
        u_r = att
        pool = side_pool(+1)
        if not pool:
            raise DifficultyWindowExhaustedError("no stable direction left of u*")
        u_l = closest_to(perp_right.neg(), pool)

    cls.droplet_directions = tuple(sort_directions([ustar, ustar.neg(), u_l, u_r]))
    return cls


# ---------------------------------------------------------------------------
# quasi-stability, voracity and derived constants


def quasi_stable_set(U: UpdateFamily) -> list[Direction]:
    """Perpendiculars of every rule site, both ways; adding them to the
    stable set lets droplets grow cleanly into their corners."""
    if not U.rules:
        raise EmptyFamilyError("quasi-stable set of an empty family")
    out = set()
    for x in U.all_sites():
        d = Direction.of(x[0], x[1]).perp()
        out.add(d)
        out.add(d.neg())
    return sort_directions(out)


def consecutive_pairs(dirs: Sequence[Direction]) -> list[tuple[Direction, Direction]]:
    order = sort_directions(dirs)
    return [(order[i], order[(i + 1) % len(order)]) for i in range(len(order))]


def voracious_check(Z: Iterable[Site], u: Direction, U: UpdateFamily,
                    alpha_cap: int) -> bool:
    """Whether H_u plus Z infects infinitely many sites of the boundary line."""
    Z = frozenset(tuple(z) for z in Z)
    if len(Z) > alpha_cap:
        raise ValueError(f"witness of size {len(Z)} exceeds cap {alpha_cap}")
    v = _line_decision(u, Z, U, "line")
    if v is StripVerdict.BAND_EXCEEDED:
        raise StripHeightExceededError(f"band escalation exhausted for u={u}")
    return v is StripVerdict.INFINITE_LINE


def _ray_filled(u: Direction, Z: frozenset, U: UpdateFamily) -> bool:
    """Whether the closure of H_u plus Z covers the entire plus ray of the
    boundary line (every site, not just infinitely many)."""
    a, b = u.a, u.b
    norm2 = a * a + b * b
    h = 4 * math.ceil(nu(U)) * (len(Z) + 1)
    while True:
        scan = strip_scan(u, Z, U, h)
        if scan.verdict_plus is StripVerdict.BAND_EXCEEDED and h < MAX_BAND_HEIGHT:
            h *= 2
            continue
        if scan.verdict_plus is not StripVerdict.INFINITE_LINE or scan.period_plus is None:
            return False
        j0, r = scan.period_plus
        w = scan.col_width
        hi_c = (j0 + 3 * r) * w
        i = 0
        while i * norm2 < hi_c:
            if (i * b, -i * a) not in scan.infected:
                return False
            i += 1
        return True


def alpha_star(U: UpdateFamily, u_star: Direction, window: int = 16) -> DifficultyResult:
    """Minimal number of consecutive boundary-line sites that, with the
    half-plane, infect the whole plus ray."""
    if not is_stable(u_star, U):
        return DifficultyResult(0, window, frozenset(), 0)
    a, b = u_star.a, u_star.b
    for k in range(1, window + 1):
        Z = frozenset((i * b, -i * a) for i in range(k))
        if _ray_filled(u_star, Z, U):
            return DifficultyResult(k, window, Z, k)
    raise SearchBudgetExceededError(f"no consecutive witness up to size {window}")


@dataclass(frozen=True)
class RhoBound:
    value: float
    witness_direction: Optional[Direction] = None
    witness: Optional[frozenset] = None
    witness_site: Optional[Site] = None


def _halfplane_additions(U: UpdateFamily, u: Direction, Z: frozenset) -> set[Site]:
    """Closure additions of H_u plus Z above the half-plane, computed on an
    escalating box; raises if the growth refuses to stabilize."""
    reach = math.ceil(nu(U))
    if Z:
        xs = [z[0] for z in Z]
        ys = [z[1] for z in Z]
        bx0, bx1 = min(xs), max(xs)
        by0, by1 = min(ys), max(ys)
    else:
        bx0 = bx1 = by0 = by1 = 0
    pad = 2 * reach + 2
    for _ in range(8):
        box = Box(bx0 - pad, by0 - pad, bx1 + pad + 1, by1 + pad + 1)
        w = Window(box, HalfPlane(u, 0))
        out = closure(Z, w, U)
        touches = any(
            s[0] - box.x0 < reach or box.x1 - 1 - s[0] < reach
            or s[1] - box.y0 < reach or box.y1 - 1 - s[1] < reach
            for s in out
        )
        if not touches:
            return out
        pad *= 2
    raise StripHeightExceededError(
        f"closure of H_{u} plus {set(Z)} does not stabilize (alpha_bar too small?)")


def rho_bound(U: UpdateFamily, directions: Sequence[Direction], alpha: int,
              window: int = 4, ctx: Optional[UNormContext] = None) -> RhoBound:
    """Maximal displacement of a new infection from a helper set of size
    alpha-1 next to a stable half-plane, over the given directions and all
    translation-reduced helper sets in the radius-``window`` box.

    With a UNormContext the displacement is measured in the anisotropic norm
    (the rho(u, gamma) variant), otherwise Euclidean.
    """
    best = RhoBound(0.0)
    k = alpha - 1
    for u in directions:
        if k == 0:
            candidates: Iterable[frozenset] = [frozenset()]
        else:
            sites = _half_sites(u, window)
            seen = set()
            cands = []
            for combo in itertools.combinations(sites, k):
                Z = _canonical_translate(combo, u)
                if Z not in seen:
                    seen.add(Z)
                    cands.append(Z)
            candidates = cands
        for Z in candidates:
            out = _halfplane_additions(U, u, Z)
            for site in out:
                if Z:
                    if ctx is not None:
                        d = min(u_norm((site[0] - z[0], site[1] - z[1]), ctx) for z in Z)
                    else:
                        d = min(euclid(site, z) for z in Z)
                else:
                    d = math.inf if out else 0.0
                if d > best.value:
                    best = RhoBound(d, u, Z, site)
    return best


def kappa(U: UpdateFamily, c: Classification, rho_hat: float) -> float:
    """Strong-connectivity radius: 2(rho + nu) for balanced families, 3 nu
    for unbalanced ones."""
    if c.kind is not Kind.CRITICAL:
        raise NotCriticalError("kappa is defined for critical families only")
    n = nu(U)
    return 2.0 * (rho_hat + n) if c.balanced else 3.0 * n


def difference_perpendiculars(U: UpdateFamily) -> list[Direction]:
    pts = list(U.all_sites()) + [(0, 0)]
    out = set()
    for i in range(len(pts)):
        for j in range(len(pts)):
            if i == j:
                continue
            dx = pts[i][0] - pts[j][0]
            dy = pts[i][1] - pts[j][1]
            d = Direction.of(dx, dy).perp()
            out.add(d)
            out.add(d.neg())
    return sort_directions(out)


def iceberg_u0(U: UpdateFamily, u_star: Direction, S: StableSet,
               window: int = 6, max_cardinality: int = 2) -> Direction:
    """A rational direction strictly between u* and every difference
    perpendicular, inside the stable component of u*, on the drift side.

    On the returned interval the leftward side difficulty stays unresolved,
    and triangles with faces perpendicular to u0, u* and the base direction
    are closed next to the half-plane.
    """
    m = difficulty_side(u_star, "minus", U, window, max_cardinality)
    if m.resolved:
        raise NoDriftDirectionError(
            f"minus side of {u_star} resolved at {m.value}; no drift")
    comp = None
    for a in S.components():
        if not a.is_point() and not a.full and a.contains(u_star):
            comp = a
            break
    if comp is None:
        raise NoDriftDirectionError(f"{u_star} is not in a non-trivial stable interval")

    # minimal angular distance from u* to any difference perpendicular
    pi_key = Direction(-1, 0).angle_key()
    best_key = None
    for v in difference_perpendiculars(U):
        if v == u_star:
            continue
        k = min(ccw_key(u_star, v), ccw_key(v, u_star))
        if best_key is None or k < best_key:
            best_key = k

    ccw_side = comp.start == u_star or (comp.start != u_star and comp.end != u_star)
    spin = Direction(1, 1) if ccw_side else Direction(1, -1)
    n = 1
    while n < 1 << 40:
        from .geometry import rotate
        u0 = rotate(u_star, Direction.of(n, spin.b))
        k = min(ccw_key(u_star, u0), ccw_key(u0, u_star))
        inside = comp.contains(u0) and u0 not in (comp.start, comp.end)
        if inside and (best_key is None or k < best_key):
            return u0
        n *= 2
    raise NoDriftDirectionError("could not place u0 inside the stable interval")

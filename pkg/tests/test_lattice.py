import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ubootstrap.families import builtin
from ubootstrap.geometry import Direction
from ubootstrap.lattice import (
    TIMEOUT,
    Box,
    HalfPlane,
    OriginOutsideWindowError,
    StripVerdict,
    Torus,
    Window,
    closure,
    closure_rescan,
    infection_time,
    percolates,
    strip_line_decision,
    strip_scan,
)

U2 = builtin("two-neighbour")
DUARTE = builtin("duarte")
E1, E2 = Direction(1, 0), Direction(0, 1)
BOX = Window(Box(-24, -24, 25, 25))


class TestClosure:
    def test_empty(self):
        assert closure([], BOX, U2) == set()

    def test_single_site_is_closed(self):
        assert closure([(0, 0)], BOX, U2) == {(0, 0)}

    def test_diagonal_pair_fills_square(self):
        got = closure([(0, 0), (1, 1)], BOX, U2)
        assert got == {(0, 0), (1, 0), (0, 1), (1, 1)}

    def test_matches_rescan_oracle_on_examples(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            pts = {(int(x), int(y)) for x, y in rng.integers(-8, 9, size=(12, 2))}
            w = Window(Box(-10, -10, 11, 11))
            for fam in (U2, DUARTE):
                assert closure(pts, w, fam) == closure_rescan(pts, w, fam)

    def test_torus_matches_rescan(self):
        rng = np.random.default_rng(7)
        pts = {(int(x), int(y)) for x, y in rng.integers(0, 8, size=(10, 2))}
        w = Window(Torus(8))
        assert closure(pts, w, U2) == closure_rescan(pts, w, U2)

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=25, deadline=None)
    def test_monotone_and_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        pts = [(int(x), int(y)) for x, y in rng.integers(-6, 7, size=(10, 2))]
        small = set(pts[:6])
        big = small | set(pts[6:])
        c_small = closure(small, BOX, U2)
        c_big = closure(big, BOX, U2)
        assert c_small <= c_big
        assert closure(c_big, BOX, U2) == c_big

    def test_halfplane_boundary_not_materialized(self):
        w = Window(Box(-6, -6, 7, 7), HalfPlane(E2, 0))
        got = closure([(0, 0)], w, DUARTE)
        assert all(s[1] >= 0 for s in got)
        # rightward growth along the boundary line with half-plane help
        assert (3, 0) in got

    def test_halfplane_dichotomy(self):
        # stable directions add nothing; unstable ones fill a central cone
        for U in (U2, DUARTE):
            for d in (E1, E2, Direction(1, 1), Direction(-1, 2), Direction(2, -1),
                      Direction(-1, 0), Direction(0, -1), Direction(-2, -3)):
                w = Window(Box(-30, -30, 31, 31), HalfPlane(d, 0))
                got = closure([], w, U)
                stable = all(any(d.dot(x) >= 0 for x in rule) for rule in U.rules)
                if stable:
                    assert got == set()
                else:
                    assert (0, 0) in got and len(got) > 100


class TestPercolates:
    def test_full_and_empty(self):
        n = 6
        allsites = [(x, y) for x in range(n) for y in range(n)]
        assert percolates(allsites, n, U2)
        assert not percolates([], n, U2)

    def test_diagonal_fills_torus(self):
        assert percolates([(i, i) for i in range(8)], 8, U2)

    def test_single_site_does_not(self):
        assert not percolates([(3, 3)], 8, U2)


class TestInfectionTime:
    def test_origin_already_infected(self):
        assert infection_time([(0, 0)], U2, 10, BOX) == 0

    def test_one_step(self):
        assert infection_time([(0, 1), (1, 0), (-1, 0)], U2, 10, BOX) == 1

    def test_empty_times_out(self):
        assert infection_time([], U2, 10, BOX) is TIMEOUT

    def test_origin_outside_window(self):
        with pytest.raises(OriginOutsideWindowError):
            infection_time([(6, 6)], U2, 10, Window(Box(5, 5, 9, 9)))

    def test_matches_synchronous_rescan(self):
        # tiny synchronous reference: step closure by hand
        rng = np.random.default_rng(3)
        pts = {(int(x), int(y)) for x, y in rng.integers(-5, 6, size=(25, 2))}
        w = Window(Box(-12, -12, 13, 13))
        t = infection_time(pts, U2, 30, w)
        cur = {s for s in pts if w.shape.contains(s)}
        expect = 0 if (0, 0) in cur else None
        step = 0
        while expect is None and step < 30:
            nxt = set(cur)
            for x in range(-12, 13):
                for y in range(-12, 13):
                    if (x, y) in cur:
                        continue
                    for rule in U2.rules:
                        if all((x + dx, y + dy) in cur for dx, dy in rule):
                            nxt.add((x, y))
                            break
            if nxt == cur:
                break
            cur = nxt
            step += 1
            if (0, 0) in cur:
                expect = step
        assert t == (expect if expect is not None else TIMEOUT)


class TestStripMachine:
    def test_two_neighbour_line_fills(self):
        assert strip_line_decision(E1, [(0, 0)], U2, 4, "plus") is StripVerdict.INFINITE_LINE
        assert strip_line_decision(E1, [(0, 0)], U2, 4, "minus") is StripVerdict.INFINITE_LINE

    def test_stable_halfplane_closed(self):
        assert strip_line_decision(E1, [], U2, 4, "plus") is StripVerdict.FINITE_LINE

    def test_duarte_one_way(self):
        assert strip_line_decision(E2, [(0, 0)], DUARTE, 4, "plus") is StripVerdict.INFINITE_LINE
        assert strip_line_decision(E2, [(0, 0)], DUARTE, 4, "minus") is StripVerdict.FINITE_LINE

    def test_verdicts_stable_under_bigger_budgets(self):
        for fam, u, Z in [
            (U2, E1, [(0, 0)]),
            (DUARTE, E2, [(0, 0)]),
            (DUARTE, E2, [(2, 1), (0, 0)]),
            (builtin("asym-balanced"), E1, [(0, 0)]),
            (builtin("van-enter-hulshof"), E2, [(0, 0), (1, 0)]),
        ]:
            small = strip_scan(u, Z, fam, 8)
            big = strip_scan(u, Z, fam, 16, max_columns=8192)
            assert small.verdict_plus == big.verdict_plus
            assert small.verdict_minus == big.verdict_minus

    def test_periodic_segment_repeats_forward(self):
        # semi-periodicity: the detected period's column pattern extends
        scan = strip_scan(E1, [(0, 0)], U2, 6)
        assert scan.verdict_plus is StripVerdict.INFINITE_LINE
        assert scan.period_plus is not None
        j0, r = scan.period_plus
        w = scan.col_width
        a, b = E1.a, E1.b

        def col_pattern(i):
            out = set()
            for sx, sy in scan.infected:
                c = b * sx - a * sy
                if i * w <= c < (i + 1) * w:
                    out.add((a * sx + b * sy, c - i * w))
            return frozenset(out)

        for m in range(3 * r):
            assert col_pattern(j0 + m) == col_pattern(j0 + m % r)

    def test_unstable_direction_is_trivially_infinite(self):
        assert strip_line_decision(Direction(1, 1), [], U2, 4, "plus") is StripVerdict.INFINITE_LINE

    def test_band_exceeded_for_witness_above_band(self):
        v = strip_line_decision(E2, [(0, 9)], DUARTE, 4, "plus")
        assert v is StripVerdict.BAND_EXCEEDED

    def test_range_two_rules_periodicity(self):
        # vertical growth jumps by two; the column machine must still settle
        fam = builtin("asym-balanced")
        assert strip_line_decision(E1, [(0, 0)], fam, 8, "plus") is StripVerdict.INFINITE_LINE

import numpy as np
import pytest

from kuratowski.distance import GRAPH, DistanceMethod, prepare
from kuratowski.embedding import (
    CSV_HEADER,
    EmbeddedPoint,
    PairSample,
    distortion_scan,
    embed,
    embed_batch,
    linf_distance,
    loop_pullback_length,
    pair_ratio,
    pair_ratios,
    polyline_length,
    sample_pairs,
)
from kuratowski.errors import UsageError
from kuratowski.manifold import ChartPoint, ManifoldSpec, sample_points_batch
from kuratowski.nets import Net, build_net

FLAT = ManifoldSpec("flat_torus")


def one_point(coords=(0.0, 0.0), spec=FLAT):
    return Net(np.array([coords], dtype=float), np.zeros(1, dtype=int), 1.5, spec.spec_hash)


@pytest.fixture(scope="module")
def nets():
    out, base = [], None
    for e in (0.4, 0.2, 0.1, 0.05):
        base = build_net(FLAT, e, base=base)
        out.append(base)
    return out


def horizontal_loop(n=64):
    return [ChartPoint((t, 0.0)) for t in np.arange(n + 1) / n]


def test_embed_examples(nets):
    net = nets[1]
    e = embed(FLAT, net, ChartPoint(net.coords[3]))
    assert e.coords[3] == 0.0
    assert embed(FLAT, one_point(), ChartPoint((0.3, 0.0))).coords == pytest.approx([0.3])
    X, c = sample_points_batch(FLAT, np.random.default_rng(12), 500)
    assert embed_batch(FLAT, net, X, c).max() <= np.sqrt(2) / 2 + 1e-9


def test_linf_examples(nets):
    a = EmbeddedPoint(np.array([0.3]), ChartPoint((0, 0)), "n")
    b = EmbeddedPoint(np.array([0.1]), ChartPoint((0, 0)), "n")
    assert linf_distance(a, a) == 0.0
    assert linf_distance(a, b) == pytest.approx(0.2)
    with pytest.raises(UsageError):
        linf_distance(a, EmbeddedPoint(np.array([0.1]), ChartPoint((0, 0)), "other"))


def test_embedding_is_one_lipschitz(nets):
    pairs = sample_pairs(FLAT, 2000, 0.5, 1e-3, 13)
    for net in nets:
        linf, ratio = pair_ratios(FLAT, net, pairs)
        assert np.all(linf <= pairs.d + 2e-12)


def test_pair_ratio_examples():
    net = Net(np.array([[0.0, 0.0], [0.5, 0.5]]), np.zeros(2, dtype=int), 0.5, FLAT.spec_hash)
    assert pair_ratio(FLAT, net, ChartPoint((0.4, 0.0)), ChartPoint((0.2, 0.0))) == pytest.approx(1.0)
    r = pair_ratio(FLAT, one_point(), ChartPoint((0.2, 0.0)), ChartPoint((0.0, 0.2)))
    assert r == 0.0
    with pytest.raises(UsageError):
        pair_ratio(FLAT, net, ChartPoint((0.2, 0.0)), ChartPoint((0.2, 0.0)))


def test_one_point_net_scan():
    scan = distortion_scan(FLAT, one_point(), 500, 0.5, 1)
    assert 0.0 <= scan.report.min_ratio <= 1.0
    X = np.array([[0.2, 0.0]])
    Y = np.array([[0.0, 0.2]])
    sym = PairSample(X, np.zeros(1, int), Y, np.zeros(1, int), np.array([0.2 * np.sqrt(2)]),
                     np.zeros(1, bool))
    assert distortion_scan(FLAT, one_point(), 1, 0.0, 1, pairs=sym).report.min_ratio == 0.0


def test_refinement_never_lowers_ratio(nets):
    pairs = sample_pairs(FLAT, 3000, 0.5, 5e-4, 14)
    ratios = [pair_ratios(FLAT, net, pairs)[1] for net in nets]
    for coarse, fine in zip(ratios, ratios[1:]):
        assert np.all(fine >= coarse - 1e-9)


def test_scan_report_and_csv(nets):
    scan = distortion_scan(FLAT, nets[2], 400, 0.5, 3)
    rep = scan.report
    assert rep.C == pytest.approx(1 - rep.min_ratio)
    assert sum(rep.histogram) == rep.pair_count == len(scan.pairs)
    assert rep.near_count == 200
    lines = scan.csv_lines()
    assert lines[0] == CSV_HEADER and len(lines) == 401
    assert distortion_scan(FLAT, nets[2], 400, 0.5, 3).csv_lines() == lines


def test_sample_pairs_near_distances():
    pairs = sample_pairs(FLAT, 100, 1.0, 1e-3, 5)
    np.testing.assert_allclose(pairs.d, 1e-3, rtol=1e-9)
    with pytest.raises(UsageError):
        sample_pairs(FLAT, 10, 1.5, 1e-3, 5)


def test_loop_pullback(nets):
    loop = horizontal_loop()
    assert polyline_length(FLAT, loop) == pytest.approx(1.0)
    pull = loop_pullback_length(FLAT, nets[-1], loop)
    assert 0.2 <= pull <= 1.0 + 1e-9
    assert pull >= 0.95
    s = 0.01
    corners = [(0.3, 0.3), (0.3 + s, 0.3), (0.3 + s, 0.3 + s), (0.3, 0.3 + s)]
    square = []
    for (ax, ay), (bx, by) in zip(corners, corners[1:] + corners[:1]):
        square += [ChartPoint((ax + t * (bx - ax), ay + t * (by - ay))) for t in (0.0, 0.5)]
    square.append(square[0])
    assert loop_pullback_length(FLAT, nets[-1], square) <= 4 * s + 1e-12


def test_loop_errors(nets):
    with pytest.raises(UsageError):
        loop_pullback_length(FLAT, nets[0], horizontal_loop()[:-1])
    with pytest.raises(UsageError):
        loop_pullback_length(FLAT, nets[0], horizontal_loop(4))


def test_graph_embedding_respects_error_bar():
    spec = ManifoldSpec("conformal_torus", amplitude=0.1)
    m = prepare(spec, DistanceMethod(GRAPH))
    net = build_net(spec, 0.2, m)
    scan = distortion_scan(spec, net, 300, 0.5, 2, m)
    assert scan.report.error_bar == 0.02
    assert np.all(scan.ratio <= 1 + scan.report.error_bar)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amsupply.costmatrix import (
    CsvMatrixProvider,
    DegenerateMatrixError,
    DomainError,
    InlineMatrixProvider,
    MatrixResolutionError,
    MatrixTransportError,
    NormalizationWeights,
    RawTravelMatrix,
    RemoteMatrixProvider,
    build_cost_matrix,
    fetch_matrix,
    normalized_cost,
    write_matrix_csv,
)
from amsupply.model import Location

W = NormalizationWeights(0.7, 0.3)


def locs(*ids):
    return [Location(x, x, -20.0 - k, -45.0 + k) for k, x in enumerate(ids)]


@pytest.mark.parametrize(
    "args, expected",
    [
        ((500000, 18000, 500000, 18000), 1.0),
        ((0, 0, 500000, 18000), 0.0),
        ((250000, 9000, 500000, 18000), 0.5),
    ],
)
def test_normalized_cost_examples(args, expected):
    assert normalized_cost(*args, W) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "args",
    [(1, 1, 0, 10), (1, 1, 10, 0), (11, 1, 10, 10), (1, -1, 10, 10), (-1, 1, 10, 10)],
)
def test_normalized_cost_domain(args):
    with pytest.raises(DomainError):
        normalized_cost(*args, W)


@pytest.mark.parametrize("tw, dw", [(0.5, 0.6), (1.2, -0.2), (0.7, 0.3000001)])
def test_weights_must_be_complementary(tw, dw):
    with pytest.raises(ValueError):
        NormalizationWeights(tw, dw)


def test_two_locations():
    raw = RawTravelMatrix.from_rows([("A", "B", 100, 10), ("B", "A", 100, 10)])
    cm = build_cost_matrix(raw, NormalizationWeights(0.5, 0.5))
    assert cm.cost("A", "B") == 1.0
    assert cm.cost("A", "A") == 0.0


def test_three_location_asymmetric_by_hand():
    rows = [
        ("A", "B", 100, 50),
        ("B", "A", 80, 60),
        ("A", "C", 200, 30),
        ("C", "A", 150, 40),
        ("B", "C", 50, 10),
        ("C", "B", 60, 20),
    ]
    cm = build_cost_matrix(RawTravelMatrix.from_rows(rows), W)
    assert cm.max_distance == 200 and cm.max_time == 60
    # no pair attains both maxima, so nothing reaches 1
    assert cm.total_cost.max() < 1.0
    expected = {
        ("A", "B"): 0.3 * 100 / 200 + 0.7 * 50 / 60,
        ("B", "A"): 0.3 * 80 / 200 + 0.7 * 60 / 60,
        ("A", "C"): 0.3 * 200 / 200 + 0.7 * 30 / 60,
        ("C", "A"): 0.3 * 150 / 200 + 0.7 * 40 / 60,
        ("B", "C"): 0.3 * 50 / 200 + 0.7 * 10 / 60,
        ("C", "B"): 0.3 * 60 / 200 + 0.7 * 20 / 60,
    }
    for (a, b), v in expected.items():
        assert cm.cost(a, b) == pytest.approx(v, rel=1e-14)
    assert cm.cost("B", "A") == pytest.approx(0.82)


def test_single_location():
    raw = RawTravelMatrix(("A",), np.zeros((1, 1)), np.zeros((1, 1)))
    cm = build_cost_matrix(raw, W)
    assert cm.total_cost.shape == (1, 1) and cm.total_cost[0, 0] == 0.0


def test_degenerate_all_zero():
    raw = RawTravelMatrix(("A", "B"), np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DegenerateMatrixError):
        build_cost_matrix(raw, W)


def test_zero_times_only_uses_distance_term():
    raw = RawTravelMatrix.from_rows([("A", "B", 100, 0), ("B", "A", 50, 0)])
    cm = build_cost_matrix(raw, W)
    assert cm.cost("A", "B") == pytest.approx(0.3)
    assert cm.cost("B", "A") == pytest.approx(0.15)


def test_negative_entry_rejected():
    raw = RawTravelMatrix.from_rows([("A", "B", -1, 1), ("B", "A", 1, 1)])
    with pytest.raises(DomainError):
        build_cost_matrix(raw, W)


def test_cell_oracle_on_random_matrix():
    rng = np.random.default_rng(3)
    n = 7
    d = rng.uniform(0, 1e6, (n, n))
    t = rng.uniform(0, 4e4, (n, n))
    np.fill_diagonal(d, 0)
    np.fill_diagonal(t, 0)
    ids = tuple(f"X{i}" for i in range(n))
    cm = build_cost_matrix(RawTravelMatrix(ids, d, t), W)
    for i in range(n):
        for j in range(n):
            expect = 0.0 if i == j else normalized_cost(d[i, j], t[i, j], d.max(), t.max(), W)
            assert cm.total_cost[i, j] == pytest.approx(expect, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(2, 6),
    seed=st.integers(0, 2**32 - 1),
    k=st.floats(1e-3, 1e3),
    tw=st.floats(0, 1),
)
def test_scale_invariance_and_bounds(n, seed, k, tw):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0, 1e5, (n, n))
    t = rng.uniform(1, 1e4, (n, n))
    np.fill_diagonal(d, 0)
    np.fill_diagonal(t, 0)
    ids = tuple(str(i) for i in range(n))
    w = NormalizationWeights(tw, 1 - tw)
    base = build_cost_matrix(RawTravelMatrix(ids, d, t), w).total_cost
    scaled = build_cost_matrix(RawTravelMatrix(ids, d * k, t), w).total_cost
    assert np.allclose(base, scaled, rtol=1e-12, atol=1e-15)
    assert base.min() >= 0 and base.max() <= 1 + 1e-15


@settings(max_examples=100, deadline=None)
@given(
    d1=st.floats(0, 1000),
    d2=st.floats(0, 1000),
    t1=st.floats(0, 1000),
    t2=st.floats(0, 1000),
)
def test_monotone_in_each_argument(d1, d2, t1, t2):
    lo_d, hi_d = sorted((d1, d2))
    lo_t, hi_t = sorted((t1, t2))
    assert normalized_cost(lo_d, lo_t, 1000, 1000, W) <= normalized_cost(hi_d, lo_t, 1000, 1000, W)
    assert normalized_cost(lo_d, lo_t, 1000, 1000, W) <= normalized_cost(lo_d, hi_t, 1000, 1000, W)


def test_cell_attaining_both_maxima_is_exactly_one():
    raw = RawTravelMatrix.from_rows([("A", "B", 7, 3), ("B", "A", 2, 1)])
    assert build_cost_matrix(raw, W).cost("A", "B") == 1.0


def test_missing_pair_in_rows():
    with pytest.raises(MatrixResolutionError) as err:
        RawTravelMatrix.from_rows([("A", "B", 1, 1), ("B", "A", 1, 1), ("A", "C", 1, 1)])
    assert err.value.pair in {("B", "C"), ("C", "A")}


# -- providers ---------------------------------------------------------------


def _raw3():
    rows = [
        ("A", "B", 100, 10),
        ("B", "A", 110, 11),
        ("A", "C", 200, 20),
        ("C", "A", 210, 21),
        ("B", "C", 300, 30),
        ("C", "B", 310, 31),
    ]
    return RawTravelMatrix.from_rows(rows)


def test_csv_provider_echoes_file(tmp_path):
    raw = _raw3()
    path = tmp_path / "m.csv"
    write_matrix_csv(raw, path)
    assert path.read_text().splitlines()[0] == "origin,destination,distance_m,travel_time_s"
    got = fetch_matrix(CsvMatrixProvider(path), locs("A", "B", "C"))
    assert got.ids == ("A", "B", "C")
    assert (got.distance == raw.distance).all() and (got.travel_time == raw.travel_time).all()


def test_csv_provider_missing_pair(tmp_path):
    path = tmp_path / "m.csv"
    write_matrix_csv(_raw3(), path)
    lines = [line for line in path.read_text().splitlines() if not line.startswith("B,C,")]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MatrixResolutionError) as err:
        fetch_matrix(CsvMatrixProvider(path), locs("A", "B", "C"))
    assert err.value.pair == ("B", "C")
    assert "(B, C)" in str(err.value)


def test_csv_provider_bad_header(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(MatrixResolutionError):
        CsvMatrixProvider(path)


def test_inline_provider():
    got = fetch_matrix(InlineMatrixProvider(_raw3()), locs("C", "A"))
    assert got.ids == ("C", "A")
    assert got.pair("C", "A") == (210.0, 21.0)


class FakeService:
    """Answers distance-matrix requests from a table and counts calls."""

    def __init__(self, table, status=None):
        self.table = table
        self.calls = []
        self.status = status or {}

    def __call__(self, url, params):
        self.calls.append(params)
        origin = params["origins"]
        elements = []
        for dest in params["destinations"].split("|"):
            key = (origin, dest)
            if key in self.status:
                elements.append({"status": self.status[key]})
            else:
                d, t = self.table[key]
                elements.append({"status": "OK", "distance": {"value": d}, "duration": {"value": t}})
        return {"status": "OK", "rows": [{"elements": elements}]}


def _service_for(locations):
    table = {}
    for i, a in enumerate(locations):
        for j, b in enumerate(locations):
            if i != j:
                table[(f"{a.latitude},{a.longitude}", f"{b.latitude},{b.longitude}")] = (
                    1000 * (i + 1) + j,
                    60 * (i + j),
                )
    return FakeService(table)


def test_remote_provider_batches_and_caches(tmp_path):
    places = locs("A", "B", "C", "D")
    service = _service_for(places)
    provider = RemoteMatrixProvider("https://example.invalid/matrix", tmp_path, transport=service, max_destinations=2)
    first = fetch_matrix(provider, places)
    # four origins, three destinations each, batches of two
    assert len(service.calls) == 8
    assert first.pair("B", "D") == (2003.0, 240.0)

    fresh = _service_for(places)
    again = fetch_matrix(RemoteMatrixProvider("https://example.invalid/matrix", tmp_path, transport=fresh), places)
    assert fresh.calls == []
    assert (again.distance == first.distance).all()
    assert not list(tmp_path.glob("*.tmp"))


def test_remote_provider_partial_cache(tmp_path):
    places = locs("A", "B", "C")
    provider = RemoteMatrixProvider("u", tmp_path, transport=_service_for(places))
    fetch_matrix(provider, places[:2])
    service = _service_for(places)
    fetch_matrix(RemoteMatrixProvider("u", tmp_path, transport=service), places)
    asked = sum(len(c["destinations"].split("|")) for c in service.calls)
    assert asked == 6 - 2


def test_remote_provider_element_failure_names_pair(tmp_path):
    places = locs("A", "B")
    service = _service_for(places)
    a, b = places
    service.status[(f"{a.latitude},{a.longitude}", f"{b.latitude},{b.longitude}")] = "NOT_FOUND"
    with pytest.raises(MatrixResolutionError) as err:
        fetch_matrix(RemoteMatrixProvider("u", tmp_path, transport=service), places)
    assert err.value.pair == ("A", "B")


def test_remote_provider_service_error(tmp_path):
    def down(url, params):
        return {"status": "OVER_QUERY_LIMIT"}

    with pytest.raises(MatrixTransportError):
        fetch_matrix(RemoteMatrixProvider("u", tmp_path, transport=down), locs("A", "B"))


def test_remote_provider_api_key_from_environment(tmp_path, monkeypatch):
    places = locs("A", "B")
    service = _service_for(places)
    provider = RemoteMatrixProvider("u", tmp_path, api_key_env="MATRIX_TEST_KEY", transport=service)
    monkeypatch.delenv("MATRIX_TEST_KEY", raising=False)
    with pytest.raises(MatrixTransportError, match="MATRIX_TEST_KEY"):
        fetch_matrix(provider, places)
    monkeypatch.setenv("MATRIX_TEST_KEY", "secret")
    fetch_matrix(provider, places)
    assert service.calls[-1]["key"] == "secret"


def test_default_weights():
    w = NormalizationWeights()
    assert (w.time_weight, w.distance_weight) == (0.7, 0.3)
    assert math.isclose(w.time_weight + w.distance_weight, 1.0)

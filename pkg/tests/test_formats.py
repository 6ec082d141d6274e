import json
import struct

import numpy as np
import pytest

from oceanchl.core import BAND_NAMES, GeoGrid, GridStack, SampleTable
from oceanchl.errors import (ChlError, FormatError, LengthError, ParseError, SchemaError,
                             VersionError)
from oceanchl.estimators import KINDS, EstimatorSpec, fit
from oceanchl.formats import (GRID_MAGIC, TABLE_HEADER, load_grid, load_model, load_table,
                              read_grid, read_table, save_grid, save_model, save_table,
                              write_grid, write_table)

from conftest import planted_table, random_stack, random_table

GEO = (10.0, 0.0, -20.0, -12.0)
FAST = {"bagging": {"n_estimators": 4}, "forest": {"n_estimators": 4},
        "extra_trees": {"n_estimators": 4}}


def payload(data):
    (hlen,) = struct.unpack_from("<I", data, 8)
    return data[12 + hlen:]


def same_stack(a, b):
    assert list(a.bands) == list(b.bands)
    for name in a.bands:
        assert a.bands[name].georef == b.bands[name].georef
        assert np.array_equal(a.bands[name].values, b.bands[name].values)
    assert (a.chl is None) == (b.chl is None)
    if a.chl is not None:
        assert np.array_equal(a.chl.values, b.chl.values)
    assert (a.time_start, a.time_end) == (b.time_start, b.time_end)


class TestGridWrite:
    def test_single_value_payload(self):
        data = write_grid(GridStack({"rrs_443": GeoGrid([[2.0]], *GEO)}))
        assert data[:8] == GRID_MAGIC == b"OCGRID\x00\x01"
        assert payload(data) == b"\x00\x00\x00\x40"

    def test_two_band_length(self):
        bands = {b: GeoGrid(np.ones((2, 2)), *GEO) for b in ("rrs_443", "rrs_555")}
        assert len(payload(write_grid(GridStack(bands)))) == 32

    def test_header_fields(self, stack):
        data = write_grid(stack)
        (hlen,) = struct.unpack_from("<I", data, 8)
        head = json.loads(data[12:12 + hlen])
        assert head["band_names"] == list(BAND_NAMES) + ["chl"]
        assert (head["n_rows"], head["n_cols"]) == (8, 8)
        assert head["time_start"] == "2020-01-01T00:00:00Z"

    def test_row_major_north_first(self):
        data = write_grid(GridStack({"rrs_443": GeoGrid([[1.0, 2.0], [3.0, 4.0]], *GEO)}))
        assert np.frombuffer(payload(data), "<f4").tolist() == [1.0, 2.0, 3.0, 4.0]


class TestGridRoundTrip:
    def test_float32_stack_is_exact(self, stack):
        v32 = {b: g.with_values(g.values.astype(np.float32)) for b, g in stack.bands.items()}
        s = GridStack(v32, stack.chl.with_values(stack.chl.values.astype(np.float32)),
                      stack.time_start, stack.time_end)
        same_stack(read_grid(write_grid(s)), s)

    def test_float64_rounds_to_float32(self, stack):
        back = read_grid(write_grid(stack))
        for b in BAND_NAMES:
            assert np.array_equal(back.bands[b].values,
                                  stack.bands[b].values.astype(np.float32).astype(np.float64))
        assert np.array_equal(write_grid(back), write_grid(stack))

    def test_fill_preserved(self):
        s = GridStack({"rrs_443": GeoGrid([[-999.0, 0.5]], *GEO)})
        back = read_grid(write_grid(s))
        assert back.bands["rrs_443"].values[0, 0] == -999.0
        assert back.bands["rrs_443"].valid_mask().tolist() == [[False, True]]

    def test_no_chl_no_times(self):
        s = random_stack(3, 4, with_chl=False)
        s = GridStack(s.bands)
        same_stack(read_grid(write_grid(s)), GridStack(
            {b: g.with_values(g.values.astype(np.float32)) for b, g in s.bands.items()}))

    def test_files(self, tmp_path, stack):
        save_grid(tmp_path / "a.ocg", stack)
        assert (tmp_path / "a.ocg").read_bytes() == write_grid(stack)
        same_stack(load_grid(tmp_path / "a.ocg"), read_grid(write_grid(stack)))


def rebuild(header, planes):
    head = json.dumps(header).encode()
    return GRID_MAGIC + struct.pack("<I", len(head)) + head + planes


BASE_HEADER = {"n_rows": 1, "n_cols": 2, "lat_north": 1.0, "lat_south": 0.0, "lon_west": 0.0,
               "lon_east": 1.0, "band_names": ["rrs_443"], "fill_value": -999.0,
               "time_start": None, "time_end": None}


class TestGridRead:
    def test_bad_magic(self, stack):
        data = write_grid(stack)
        with pytest.raises(FormatError):
            read_grid(b"XXGRID\x00\x01" + data[8:])

    def test_short_payload(self):
        with pytest.raises(LengthError):
            read_grid(rebuild(BASE_HEADER, b"\x00" * 4))

    def test_long_payload(self):
        with pytest.raises(LengthError):
            read_grid(rebuild(BASE_HEADER, b"\x00" * 12))

    def test_three_of_four_pixels(self):
        h = dict(BASE_HEADER, n_rows=2)
        with pytest.raises(LengthError):
            read_grid(rebuild(h, b"\x00" * 12))

    def test_malformed_json(self):
        data = GRID_MAGIC + struct.pack("<I", 5) + b"{bad}"
        with pytest.raises(ParseError):
            read_grid(data)

    def test_header_past_end(self):
        with pytest.raises(LengthError):
            read_grid(GRID_MAGIC + struct.pack("<I", 100) + b"{}")

    @pytest.mark.parametrize("patch", [
        {"band_names": []}, {"band_names": ["a", "a"]}, {"band_names": ["chl", "rrs_443"]},
        {"n_rows": 0}, {"n_cols": 1.5}, {"lat_north": "x"}, {"lat_north": -1.0},
        {"fill_value": None}, {"time_start": 5},
    ])
    def test_bad_header_fields(self, patch):
        with pytest.raises(FormatError):
            read_grid(rebuild(dict(BASE_HEADER, **patch), b"\x00" * 8))

    def test_empty(self):
        with pytest.raises(ChlError):
            read_grid(b"")


class TestTable:
    def test_spec_line(self):
        t = SampleTable.from_arrays(np.full((1, 6), 0.01), [1.5])
        assert write_table(t) == ",".join(TABLE_HEADER) + "\n0.01,0.01,0.01,0.01,0.01,0.01,1.5\n"

    def test_round_trip(self):
        t = random_table(100, seed=5)
        back = read_table(write_table(t))
        assert np.array_equal(back.rrs, t.rrs) and np.array_equal(back.chl, t.chl)

    def test_positional_notation(self):
        t = SampleTable.from_arrays(np.full((1, 6), 1e-7), [1e22])
        line = write_table(t).splitlines()[1]
        assert "e" not in line.lower()
        assert read_table(write_table(t)).rrs[0, 0] == 1e-7

    def test_empty_chl(self):
        t = random_table(4, with_chl=False)
        text = write_table(t)
        assert all(line.endswith(",") for line in text.splitlines()[1:])
        assert np.isnan(read_table(text).chl).all()

    def test_lf_and_files(self, tmp_path):
        t = random_table(3)
        save_table(tmp_path / "t.csv", t)
        raw = (tmp_path / "t.csv").read_bytes()
        assert b"\r" not in raw
        assert np.array_equal(load_table(tmp_path / "t.csv").rrs, t.rrs)

    def test_crlf_accepted(self):
        t = random_table(3)
        assert np.array_equal(read_table(write_table(t).replace("\n", "\r\n")).rrs, t.rrs)

    @pytest.mark.parametrize("header", [
        "rrs_412,rrs_443,rrs_490,rrs_510,rrs_555,rrs_670,chl",
        "rrs_443,rrs_412,rrs_490,rrs_510,rrs_555,rrs_670,chl_a",
        "rrs_412,rrs_443,rrs_490,rrs_510,rrs_555,rrs_670",
        "",
    ])
    def test_bad_header(self, header):
        with pytest.raises(SchemaError):
            read_table(header + "\n0.01,0.01,0.01,0.01,0.01,0.01,1.5\n" if header else "")

    @pytest.mark.parametrize("row", ["0.01,abc,0.01,0.01,0.01,0.01,1", "0.01,0.01,0.01,0.01,0.01,0.01",
                                     "0.01,nan,0.01,0.01,0.01,0.01,1", "0.01,0.01,0.01,0.01,0.01,0.01,x"])
    def test_bad_cell(self, row):
        with pytest.raises(ParseError):
            read_table(",".join(TABLE_HEADER) + "\n" + row + "\n")

    def test_header_only(self):
        assert len(read_table(",".join(TABLE_HEADER) + "\n")) == 0


@pytest.fixture(scope="module")
def train():
    return planted_table(60, seed=6, noise=0.1)


class TestModel:
    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip_bitwise(self, train, kind):
        m = fit(EstimatorSpec(kind, FAST.get(kind, {}), seed=3), train)
        back = load_model(save_model(m))
        q = np.random.default_rng(1).uniform(0.0005, 0.03, (200, 6))
        assert np.array_equal(back.predict(q), m.predict(q))
        assert np.array_equal(back.predict(train.rrs), m.predict(train.rrs))
        assert back.spec == m.spec
        assert save_model(back) == save_model(m)

    def test_log_target_round_trip(self, train):
        t = SampleTable.from_arrays(train.rrs, np.exp(train.chl / 10))
        m = fit(EstimatorSpec("ridge", log_target=True), t)
        back = load_model(save_model(m))
        assert back.spec.log_target
        assert np.array_equal(back.predict(t.rrs), m.predict(t.rrs))

    def test_knn_three_rows(self):
        t = random_table(3, seed=2)
        m = fit(EstimatorSpec("knn", {"k": 1}), t)
        assert np.array_equal(load_model(save_model(m)).predict(t.rrs), t.chl)

    def test_tree_nodes_and_thresholds(self, train):
        m = fit(EstimatorSpec("tree"), train)
        doc = json.loads(save_model(m))
        assert doc["format_version"] == 1 and doc["model_type"] == "tree"
        back = load_model(json.dumps(doc))
        assert back.payload.tree.node_count == m.payload.tree.node_count
        assert np.array_equal(back.payload.tree.threshold, m.payload.tree.threshold)

    def test_unknown_type(self, train):
        doc = json.loads(save_model(fit(EstimatorSpec("tree"), train)))
        doc["model_type"] = "gbm"
        with pytest.raises(FormatError):
            load_model(json.dumps(doc))

    @pytest.mark.parametrize("version", [0, 2, "1", None])
    def test_version(self, train, version):
        doc = json.loads(save_model(fit(EstimatorSpec("ridge"), train)))
        doc["format_version"] = version
        with pytest.raises(VersionError):
            load_model(json.dumps(doc))

    @pytest.mark.parametrize("text", ["", "not json", "[1, 2]", "{}", "null"])
    def test_garbage(self, text):
        with pytest.raises(FormatError):
            load_model(text)

    def test_payload_schema_mismatch(self, train):
        tree = json.loads(save_model(fit(EstimatorSpec("tree"), train)))
        ridge = json.loads(save_model(fit(EstimatorSpec("ridge"), train)))
        tree["payload"] = ridge["payload"]
        with pytest.raises(FormatError):
            load_model(json.dumps(tree))


# 8-byte blocks that hit number parsing, nesting and sentinel paths
SPLICES = [b"\xff" * 8, b"\x00" * 8, b'{"a":[]}', b"1e999999", b"-0.0e-1,", b'"chl",\n ',
           b"NaN,inf,", b"[[[[[[[["]


def mutate(data: bytes, gen) -> bytes:
    """One random corruption: flips, truncation, insertion, deletion or a splice."""
    b = bytearray(data)
    op = gen.integers(5)
    if op == 0 and b:
        for _ in range(int(gen.integers(1, 8))):
            b[int(gen.integers(len(b)))] = int(gen.integers(256))
    elif op == 1:
        b = b[: int(gen.integers(len(b) + 1))]
    elif op == 2:
        pos = int(gen.integers(len(b) + 1))
        b[pos:pos] = gen.integers(0, 256, int(gen.integers(1, 16))).astype(np.uint8).tobytes()
    elif op == 3 and b:
        pos = int(gen.integers(len(b)))
        del b[pos:pos + int(gen.integers(1, 16))]
    else:
        pos = int(gen.integers(max(len(b) - 8, 1)))
        b[pos:pos + 8] = SPLICES[int(gen.integers(len(SPLICES)))]
    return bytes(b)


def fuzz(seed, data, reader, n=1000):
    gen = np.random.default_rng(seed)
    outcomes = {"ok": 0, "error": 0}
    for _ in range(n):
        try:
            reader(mutate(data, gen))
            outcomes["ok"] += 1
        except ChlError:
            outcomes["error"] += 1
    return outcomes


class TestFuzz:
    def test_grid_reader(self):
        data = write_grid(random_stack(3, 4))
        out = fuzz(0, data, read_grid)
        assert out["error"] > 0 and sum(out.values()) == 1000

    def test_table_reader(self):
        data = write_table(random_table(5)).encode()
        out = fuzz(1, data, lambda b: read_table(b.decode("utf-8", errors="replace")))
        assert out["error"] > 0

    def test_model_reader(self, train):
        data = save_model(fit(EstimatorSpec("forest", {"n_estimators": 2}), train)).encode()
        out = fuzz(2, data, load_model)
        assert out["error"] > 0


class TestFiles:
    def test_binary_table_file(self, tmp_path):
        (tmp_path / "t.csv").write_bytes(b"\xff\xfe\x00")
        with pytest.raises(ParseError):
            load_table(tmp_path / "t.csv")

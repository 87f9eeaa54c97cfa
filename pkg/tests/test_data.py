import warnings

import numpy as np
import pytest

from fnpcast.data import (WiliRecord, first_target_index, load_model, parse_csv, realtime_eval_points,
                          save_model, segment_seasons)
from fnpcast.exceptions import CheckpointError, ContractError, DataFormatError
from fnpcast.inference import forecast
from fnpcast.training import build_datasets

from conftest import small_model


def test_three_rows_sorted(fixtures):
    recs = parse_csv(fixtures / "three_rows.csv")
    assert [r.epiweek for r in recs] == [(2003, 52), (2004, 1), (2004, 2)]
    assert recs[0].wili == 1.9 and recs[0].region == "nat"


def test_negative_value_rejected_with_line(fixtures):
    with pytest.raises(DataFormatError, match="line 3"):
        parse_csv(fixtures / "negative.csv")


def test_duplicate_epiweek_named(fixtures):
    with pytest.raises(DataFormatError, match="2003w22"):
        parse_csv(fixtures / "duplicate.csv")


def test_malformed_row_has_line(fixtures):
    with pytest.raises(DataFormatError, match="line 3"):
        parse_csv(fixtures / "malformed.csv")


def test_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataFormatError, match="header"):
        parse_csv(p)


def test_unknown_region_warns(fixtures):
    with pytest.warns(UserWarning, match="no records"):
        assert parse_csv(fixtures / "one_season.csv", region="hhs9") == []


def test_one_season(fixtures):
    seasons = segment_seasons(parse_csv(fixtures / "one_season.csv", "nat"))
    assert len(seasons) == 1
    s = seasons[0]
    assert s.season_id == "2003/04" and len(s) == 52
    assert s.epiweeks[0] == (2003, 21) and s.epiweeks[-1] == (2004, 20)


def test_incomplete_head_dropped(fixtures):
    with pytest.warns(UserWarning, match="incomplete season 2003/04"):
        assert segment_seasons(parse_csv(fixtures / "partial_head.csv")) == []


def test_two_seasons_in_order(fixtures):
    seasons = segment_seasons(parse_csv(fixtures / "two_seasons.csv", "nat"))
    assert [s.season_id for s in seasons] == ["2003/04", "2004/05"]


def test_multi_region_needs_filter(fixtures):
    with pytest.raises(ContractError):
        segment_seasons(parse_csv(fixtures / "two_seasons.csv"))


def test_gap_names_missing_week(fixtures):
    with pytest.raises(DataFormatError, match="2003w45"):
        segment_seasons(parse_csv(fixtures / "gap.csv"))


def test_53_week_season_kept():
    weeks = [(2008, w) for w in range(21, 54)] + [(2009, w) for w in range(1, 21)]
    recs = [WiliRecord(y, w, "nat", 1.0) for y, w in weeks]
    (s,) = segment_seasons(recs)
    assert len(s) == 53


def test_keep_partial_current_season():
    weeks = [(2019, w) for w in range(21, 53)] + [(2020, w) for w in range(1, 5)]
    recs = [WiliRecord(y, w, "nat", 1.0) for y, w in weeks]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert segment_seasons(recs) == []
    (s,) = segment_seasons(recs, keep_partial=True)
    assert len(s) == 36


def test_segmentation_ignores_row_order(fixtures):
    recs = parse_csv(fixtures / "two_seasons.csv", "nat")
    shuffled = [recs[i] for i in np.random.default_rng(0).permutation(len(recs))]
    a, b = segment_seasons(recs), segment_seasons(shuffled)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.values, y.values)
    # each season week maps back to exactly one record
    source = {r.epiweek: r.wili for r in recs}
    for s in a:
        assert [source[e] for e in s.epiweeks] == list(s.values)
        assert len(set(s.epiweeks)) == len(s)


def test_realtime_points_k1(fixtures):
    (s,) = segment_seasons(parse_csv(fixtures / "one_season.csv"))
    pts = realtime_eval_points(s, 1)
    assert s.epiweeks[pts[0].target_index] == (2003, 40)
    assert s.epiweeks[pts[-1].target_index] == (2004, 20)
    assert len(pts[0].prefix) > 0 and pts[0].truth == s.values[pts[0].target_index]


def test_realtime_points_k4_shift(fixtures):
    (s,) = segment_seasons(parse_csv(fixtures / "one_season.csv"))
    assert realtime_eval_points(s, 4)[0].t == realtime_eval_points(s, 1)[0].t - 3
    assert first_target_index(np.zeros(52)) == 19


def test_built_datasets_in_range(fixtures):
    seasons = segment_seasons(parse_csv(fixtures / "two_seasons.csv", "nat"))
    examples, _ = build_datasets(seasons, 4)
    for e in examples:
        assert e.t + e.horizon <= len(seasons[e.season_index])


def test_checkpoint_roundtrip(tmp_path):
    model = small_model(standardize=True)
    model.loc, model.scale = 0.25, 1.5
    save_model(tmp_path / "m.bin", model, {"note": "x"})
    loaded, meta = load_model(tmp_path / "m.bin")
    assert meta == {"note": "x"}
    assert loaded.hyperparams == model.hyperparams and loaded.loc == 0.25 and loaded.scale == 1.5
    for k, v in model.params.items():
        assert loaded.params[k].tobytes() == np.asarray(v, dtype=np.float64).tobytes()
    for a, b in zip(model.references, loaded.references):
        np.testing.assert_array_equal(a, b)
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    np.testing.assert_array_equal(forecast(model, [0.1, 0.2], 50, rng_a).draws,
                                  forecast(loaded, [0.1, 0.2], 50, rng_b).draws)


def test_checkpoint_bytes_deterministic(tmp_path):
    model = small_model()
    save_model(tmp_path / "a.bin", model)
    save_model(tmp_path / "b.bin", model)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_truncated_checkpoint(tmp_path):
    save_model(tmp_path / "m.bin", small_model())
    blob = (tmp_path / "m.bin").read_bytes()
    for cut in (4, 20, len(blob) - 8):
        (tmp_path / "t.bin").write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "t.bin")


def test_checkpoint_version_and_missing(tmp_path):
    save_model(tmp_path / "m.bin", small_model())
    blob = bytearray((tmp_path / "m.bin").read_bytes())
    blob[8] = 99
    (tmp_path / "v.bin").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_model(tmp_path / "v.bin")
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "absent.bin")

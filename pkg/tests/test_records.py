import numpy as np
import pytest

from fecgos.records import (
    PeakList,
    Record,
    RecordFormatError,
    load_annotations,
    load_record,
    resample,
    save_annotations,
    save_record,
)


def test_csv_basic_parse(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("fs=1000\na,b\n1,2\n3,4\n5,6\n7,8\n")
    rec = load_record(str(p))
    assert rec.n_channels == 2
    assert rec.n_samples == 4
    assert rec.fs == 1000
    assert np.allclose(rec.channels[0], [1, 3, 5, 7])
    assert np.allclose(rec.channels[1], [2, 4, 6, 8])


def test_csv_ragged_row_error_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("fs=1000\na,b\n1,2\n1,2,3\n")
    with pytest.raises(RecordFormatError, match=r":4:.*ragged"):
        load_record(str(p))


def test_csv_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("hello\na,b\n1,2\n")
    with pytest.raises(RecordFormatError, match="fs="):
        load_record(str(p))


def test_csv_non_numeric(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("fs=250\na\n1\nx\n")
    with pytest.raises(RecordFormatError, match="non-numeric"):
        load_record(str(p))


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    rec = Record(
        channels=[rng.standard_normal(50), rng.standard_normal(50)],
        fs=500,
        name="x",
        annotations={"fetal_r": PeakList(np.array([10.0, 60.0]))},
    )
    path = tmp_path / "x.csv"
    save_record(str(path), rec)
    back = load_record(str(path))
    assert back.fs == 500
    assert np.allclose(back.channels[0], rec.channels[0], atol=1e-8)
    assert np.allclose(back.channels[1], rec.channels[1], atol=1e-8)
    assert np.allclose(back.annotations["fetal_r"].times, [10.0, 60.0])


def test_annotations_roundtrip(tmp_path):
    path = tmp_path / "a.ann.json"
    ann = {"maternal_r": PeakList(np.array([100.0, 900.0, 1700.0]))}
    save_annotations(str(path), ann)
    back = load_annotations(str(path))
    assert np.allclose(back["maternal_r"].times, ann["maternal_r"].times)


def test_annotations_reject_decreasing(tmp_path):
    path = tmp_path / "a.ann.json"
    path.write_text('{"fetal_r": [100, 50]}')
    with pytest.raises(RecordFormatError, match="fetal_r"):
        load_annotations(str(path))


def test_wfdb_format16_roundtrip(tmp_path):
    # hand-built single-segment format-16 record, 2 signals, gain 200
    raw = np.array([[200, -400], [400, 0], [0, 200]], dtype="<i2")
    (tmp_path / "t.dat").write_bytes(raw.tobytes())
    (tmp_path / "t.hea").write_text(
        "t 2 360 3\nt.dat 16 200 16 0 0 0 0 ch1\nt.dat 16 200 16 0 0 0 0 ch2\n"
    )
    rec = load_record(str(tmp_path / "t.hea"))
    assert rec.fs == 360
    assert rec.n_samples == 3
    assert np.allclose(rec.channels[0], [1.0, 2.0, 0.0])
    assert np.allclose(rec.channels[1], [-2.0, 0.0, 1.0])


def test_wfdb_rejects_other_formats(tmp_path):
    (tmp_path / "t.dat").write_bytes(b"\x00\x00")
    (tmp_path / "t.hea").write_text("t 1 250 1\nt.dat 212 200\n")
    with pytest.raises(RecordFormatError, match="format-16"):
        load_record(str(tmp_path / "t.hea"))


def test_record_validation():
    with pytest.raises(ValueError, match="equal length"):
        Record(channels=[np.zeros(5), np.zeros(6)], fs=100)
    with pytest.raises(ValueError, match="NaN"):
        Record(channels=[np.array([0.0, np.nan])], fs=100)
    with pytest.raises(ValueError, match="past record end"):
        Record(
            channels=[np.zeros(100)],
            fs=100,
            annotations={"fetal_r": PeakList(np.array([5000.0]))},
        )


def test_peaklist_contract():
    with pytest.raises(ValueError, match="increasing"):
        PeakList(np.array([10.0, 10.0]))
    with pytest.raises(ValueError, match="non-negative"):
        PeakList(np.array([-1.0, 10.0]))
    pl = PeakList(np.array([0.0, 500.0, 1200.0]))
    assert np.allclose(pl.rr_intervals(), [500.0, 700.0])
    assert np.array_equal(pl.to_samples(1000), [0, 500, 1200])
    assert np.allclose(PeakList.from_samples([0, 250], 500).times, [0.0, 500.0])


def test_resample_identity():
    rec = Record(channels=[np.arange(10.0)], fs=1000)
    out = resample(rec, 1000)
    assert out is rec


def test_resample_sine_against_analytic():
    fs0, fs1 = 500, 1000
    t0 = np.arange(fs0 * 4) / fs0
    rec = Record(channels=[np.sin(2 * np.pi * 10 * t0)], fs=fs0)
    out = resample(rec, fs1)
    t1 = np.arange(out.n_samples) / fs1
    ref = np.sin(2 * np.pi * 10 * t1)
    c = np.corrcoef(out.channels[0], ref)[0, 1]
    assert c >= 0.999


def test_resample_length():
    rec = Record(channels=[np.zeros(57 * 500)], fs=500)
    out = resample(rec, 1000)
    assert abs(out.n_samples - 57000) <= 1

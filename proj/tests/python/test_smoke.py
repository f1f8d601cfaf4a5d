import socket

import numpy as np
import pytest

import splitwire as sw


@pytest.fixture(scope="module")
def model():
    return sw.calibrate_batchnorm(sw.build_microresnet(42))


def test_uncalibrated_hash_is_pinned():
    assert sw.build_microresnet(42).hash == 0x011CB17F852E60DF


def test_forward_range_matches_full_forward(model):
    image, label = sw.generate_input(7, 0)
    assert image.shape == (3, 32, 32) and 0 <= label < 10
    acts = model.forward(image)
    k = model.split_by_name("block1_relu")
    tail = model.forward_range(acts[k], k + 1, len(model) - 1)
    assert np.array_equal(tail, acts[-1])


def test_quantize_and_entropy_roundtrip():
    values = np.random.default_rng(3).standard_normal(4096).astype(np.float32)
    q = sw.estimate_quant_params(values)
    codes = sw.quantize(values, q["lo"], q["hi"])
    assert len(codes) == values.size
    back = sw.dequantize(codes, [values.size], q["lo"], q["hi"])
    step = (q["hi"] - q["lo"]) / 255
    inside = (values >= q["lo"]) & (values <= q["hi"])
    assert np.all(np.abs(back - values)[inside] <= step / 2 + 1e-6)
    packed = sw.entropy_encode(codes)
    assert sw.entropy_decode(packed) == codes
    assert len(packed) < len(codes)


def test_tensor_frame_roundtrip():
    t = np.arange(2 * 4 * 4, dtype=np.float32).reshape(2, 4, 4)
    msg = sw.encode_tensor_frame(t, "f32", frame_id=9, split_layer=3)
    f = sw.decode_tensor_frame(msg)
    assert f["frame_id"] == 9 and f["split_layer"] == 3 and f["codec"] == "f32"
    assert np.array_equal(f["tensor"], t)
    with pytest.raises(sw.SplitwireError):
        sw.decode_tensor_frame(msg[:-1])


def test_analysis_and_latency(model):
    rows, csv, uncalibrated = sw.profile_splits(model, count=16)
    assert not uncalibrated
    assert [r["layer_id"] for r in rows] == list(model.valid_splits)
    assert csv.splitlines()[0].startswith("layer_id")
    tm = sw.calibrate_timing(model)
    assert sw.predict_total(tm, "mobile_only", 1e5) == pytest.approx(tm.t_mobile_full_s)
    cross = sw.find_shared_crossover(model, tm, "block1_relu", "u8", 1e3, 1e7)
    assert cross is not None and cross > 0
    sweep = sw.run_sweep(model, tm, rates="100..300:100", frames=3)
    assert len(sweep.strip().splitlines()) == 1 + 3 * 4


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_client_server_agree_with_local_inference(model):
    server = sw.Server(model, "127.0.0.1:0")
    server.start()
    try:
        image, _ = sw.generate_input(7, 1)
        local = int(np.argmax(model.forward(image)[-1]))
        r = sw.client_infer(model, f"127.0.0.1:{server.port}", image, "block1_relu", "f32")
        assert r["top_k"][0][0] == local
        assert r["upload_bytes"] == 32802
        with pytest.raises(sw.TransportError):
            sw.client_infer(model, f"127.0.0.1:{_free_port()}", image, "block1_relu", "u8")
    finally:
        server.stop()

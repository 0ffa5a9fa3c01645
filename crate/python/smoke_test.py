"""Smoke test for the `aiive` Python extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/aiive-*.whl
    python python/smoke_test.py
"""

import math
import os
import tempfile
import wave

import aiive


def check_mlp():
    net = aiive.Mlp([4, 3, 3, 2], seed=5)
    probs = net.forward([[0.1, 0.2, 0.3, 0.4], [1.0, 0.0, -1.0, 0.5]])
    assert len(probs) == 2
    for row in probs:
        assert abs(sum(row) - 1.0) < 1e-12
    assert len(net.weights(1)) == 3 and len(net.weights(1)[0]) == 4
    net.resize_hidden(1, 5)
    assert net.layer_sizes == [4, 5, 3, 2]
    try:
        net.weights(4)
    except ValueError:
        pass
    else:
        raise AssertionError("layer 4 should be rejected")


def check_layout():
    net = aiive.Mlp([6, 4, 3, 2], seed=2)
    graph = aiive.LayoutGraph(net, seed=2, damping=1.0)
    before = graph.total_momentum()
    graph.step(50)
    after = graph.total_momentum()
    assert all(abs(a - b) < 1e-9 for a, b in zip(before, after))
    # Halving an edge's length quadruples its raw weight.
    assert aiive.weight_from_drag(0.5, 2.0, 1.0) == 2.0
    snap = graph.snapshot()
    hidden = next(n for n in snap["nodes"] if n["kind"] == "hidden1")
    updates = graph.drag_node(hidden["id"], [p + 0.1 for p in hidden["pos"]])
    assert updates
    graph.release_node(hidden["id"])


def check_sonify():
    assert aiive.map_to_freq("accuracy", 0.0) == 220.0
    assert aiive.map_to_freq("accuracy", 1.0) == 880.0
    assert aiive.route("split", 500.0, 300.0) == (300.0, 500.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "tone.wav")
        n = aiive.render_wav(path, [(0.0, 440.0)], [(0.0, 660.0)], 0.5)
        with wave.open(path) as w:
            assert w.getnchannels() == 2 and w.getnframes() == n == 22050


def check_session():
    data = aiive.Dataset.synthetic(seed=4, counts=(300, 80, 40), side=12)
    assert len(data) == 420 and data.input_dim == 144
    session = aiive.Session(data, hidden=(12, 8), learning_rate=0.05, batch_size=20, seed=3)
    assert session.state == "running"
    events = session.run(epochs=3)
    epochs = [e for e in events if e["type"] == "epoch"]
    assert [e["epoch"] for e in epochs] == [1, 2, 3]
    history = session.history()
    assert history[-1]["val_accuracy"] > history[0]["val_accuracy"]

    events = session.handle({"type": "pause"})
    assert {"type": "state", "value": "paused"} in events
    events = session.handle(
        '{"type": "set_hyperparams", "learning_rate": 0.01, "momentum": 0.5}'
    )
    assert events[0] == {"type": "state", "value": "tuning_hyperparams"}
    events = session.handle({"type": "add_neuron", "layer": 1, "position": [0, 0, 0]})
    kinds = {e["type"] for e in events}
    assert "structure" in kinds or "error" in kinds
    events = session.handle({"type": "resume"})
    assert session.state == "running"
    assert any(e["type"] == "hyperparams" for e in events)
    assert session.hyperparams["learning_rate"] == 0.01
    frames = [e for _ in range(10) for e in session.tick()]
    assert any(e["type"] == "layout" for e in frames)
    left, right = session.tones
    assert 20.0 <= left <= 8000.0 and 20.0 <= right <= 8000.0

    with tempfile.TemporaryDirectory() as tmp:
        trace = os.path.join(tmp, "trace.csv")
        session.write_trace(trace)
        with open(trace) as f:
            assert f.readline().strip() == "epoch,val_accuracy,val_loss,learning_rate,momentum"
        session.write_wav(os.path.join(tmp, "run.wav"), seconds_per_epoch=0.25)


def check_determinism():
    data = aiive.Dataset.synthetic(seed=4, counts=(200, 60, 30), side=10)
    runs = []
    for _ in range(2):
        s = aiive.Session(data, hidden=(6, 5), batch_size=20, seed=7)
        s.run(epochs=2, script=[{"at_step": 5, "cmd": {"type": "evaluate_now"}}])
        runs.append(s.trace())
    assert runs[0] == runs[1]
    assert all(math.isfinite(r["val_loss"]) for r in runs[0])


if __name__ == "__main__":
    print("aiive", aiive.__version__, "protocol", aiive.PROTOCOL_VERSION)
    for check in (check_mlp, check_layout, check_sonify, check_session, check_determinism):
        check()
        print("ok", check.__name__)

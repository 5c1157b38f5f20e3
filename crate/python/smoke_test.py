"""Smoke test for the Python bindings. Run after `pip install -e crates/python`."""

import tempfile

import scenforge as sf


def main():
    kb = sf.KnowledgeBase.seed()
    assert len(kb) >= 30
    hits = kb.query("behavior", "a pedestrian suddenly crosses the road", k=2)
    assert len(hits) == 2 and hits[0][1] >= hits[1][1]

    with tempfile.TemporaryDirectory() as out:
        config = 'seed = 3\nbases = ["StraightObstacle"]\nscenarios_per_base = 1\nsims = 20\n'
        summary = sf.generate(config, out=out)
        assert len(summary["cells"]) == 2
        assert len(summary["selected"]) == 4
        first = summary["selected"][0]
        with open(f"{out}/scripts/StraightObstacle-1.scene") as f:
            script = sf.SceneScript.parse(f.read())
        assert sf.SceneScript.parse(script.to_text()).to_text() == script.to_text()

        with open(f"{out}/{first['trace']}") as f:
            text = f.read()
        identical, frames = sf.replay(text)
        assert identical and frames > 0

        trace = sf.simulate(script, first["assignment"], route=first["cell"]["route"], seed=first["sample_index"])
        assert trace.collided == first["collided"]
        m = trace.metrics()
        assert 0.0 <= m["os"] <= 1.0

        state = sf.SampleState(script, seed=7)
        values = state.sample()
        state.record_outcome(values, True)
        state.refine()
        restored = sf.SampleState.from_json(state.to_json())
        assert restored.ranges() == state.ranges()

        cautious = sf.PolicyParams(brake_trigger_distance=15.0)
        assert cautious.to_dict()["brake_trigger_distance"] == 15.0
        other = sf.simulate(script, values, policy=cautious)
        assert len(other) > 0

        report = sf.evaluate(config, out=out)
        assert any(r["policy"] == "surrogate" for r in report["totals"])

    assert abs(sf.ade([[(0, 0), (1, 0)], [(0, 0), (0, 1)]]) - 2 ** 0.5 / 2) < 1e-12
    print("smoke test passed")


if __name__ == "__main__":
    main()

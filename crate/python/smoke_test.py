"""Smoke test for the qc6 Python extension.

Build the module first, e.g. `maturin build --release -m crates/py/Cargo.toml`
and `pip install` the wheel, or
copy target/release/libqc6_py.so to qc6.so somewhere on sys.path.
"""

import json
import math

import qc6


def main():
    s = qc6.SecretState(0.5, 0.5, 0.5, 0.5)
    t = qc6.teleport(s, seed=7)
    assert abs(t.fidelity - 1) < 1e-10, t
    assert t.cbits == 4

    for p in (1, 2):
        t = qc6.qis(p, qc6.SecretState.haar(3), seed=3)
        assert abs(t.fidelity - 1) < 1e-10, t

    t = qc6.rsp(math.pi / 3, seed=1)
    assert t.cbits == 2 and abs(t.fidelity - 1) < 1e-10

    t = qc6.dense(1, 2, 1)
    assert abs(t.fidelity - 1) < 1e-10
    assert json.loads(t.to_json())["protocol"] == "dense"

    f = json.loads(qc6.fuzz("teleport", trials=100, seed=7))
    assert f["failures"] == 0 and f["trials"] == 100

    c = json.loads(qc6.certify_table(table_id="1"))
    assert c["verdict"] == "consistent", c["verdict"]

    assert abs(qc6.channel_ebits(["1", "2", "3"]) - 1) < 1e-10
    assert len(qc6.channel_amplitudes()) == 64

    try:
        qc6.SecretState(1, 1, 1, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unnormalized secret accepted")

    r = json.loads(qc6.report(seed=7))
    for crit in r["criteria"]:
        print(("PASS" if crit["pass"] else "FAIL"), crit["id"], crit["name"])
    assert r["pass"]
    print("smoke test ok")


if __name__ == "__main__":
    main()

"""Smoke test for the pathcalc extension module."""

import math

import pathcalc


def main():
    (a,) = pathcalc.simulate(steps=4000, seed=11)
    (b,) = pathcalc.simulate(steps=4000, seed=11)
    assert a == b and len(a) == 4001 and a[0] == 0.0

    # Terminal value and running max against plain Python.
    assert pathcalc.evaluate("terminal_value", a) == a[-1]
    assert pathcalc.evaluate("running_max", a) == max(a)

    qv = sum((y - x) ** 2 for x, y in zip(a, a[1:]))
    assert abs(pathcalc.evaluate("quadratic_variation", a) - qv) < 1e-12

    r = pathcalc.tanaka(a, K=0.0, epsilon=0.05)
    assert abs(r["lhs"] - abs(a[-1])) < 1e-15
    assert abs(r["residual"]) < 0.2, r

    lev = pathcalc.levy(a, epsilon=0.05)
    assert lev["lhs"] >= 0.0 and math.isfinite(lev["residual"])

    ito = pathcalc.ito("square", a)
    assert abs(ito["residual"]) < 1e-9, ito

    assert pathcalc.lambda_distance(a, a) == 0.0

    try:
        pathcalc.tanaka([0.0], K=0.0, epsilon=0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("one-point path accepted")

    print("smoke test passed:", pathcalc.__version__, pathcalc.GENERATOR)


if __name__ == "__main__":
    main()

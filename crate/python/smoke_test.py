"""Smoke test for the explab Python extension.

Build and run:
    cargo build --release -p explab-py --features extension-module
    cp target/release/libexplab.so python/explab.so
    python3 python/smoke_test.py
"""

import cmath
import json
import math

import explab

TWO_PI_I = 2j * math.pi
OMEGA = 0.5671432904097838


def main():
    orbit = explab.singular_orbit(1.0, max_iter=6)
    assert orbit.status == "escaped" and orbit.escaped_at == 4
    assert abs(orbit.points[2] - math.e) < 1e-12

    ledger = explab.build_ledger(TWO_PI_I)
    levin = ledger.levin(1e-9)
    assert levin.converged
    assert abs(levin.value - TWO_PI_I / (TWO_PI_I - 1)) < 1e-9
    assert abs(explab.build_ledger(1.0).param_derivative(2) - 2 * math.e) < 1e-12

    cls = explab.classify(-1.0)
    assert cls.tag == "attracting"
    assert abs(cls.cycle.point + OMEGA) < 1e-8
    assert json.loads(cls.to_json())["tag"] == "attracting"
    assert explab.classify(1.0).tag == "escaping"

    w = explab.find_hyperbolic_near(TWO_PI_I, 0.01)
    assert w.certified and w.distance_to_seed <= 0.01

    lam1 = TWO_PI_I * 1.01
    track = explab.track_point(TWO_PI_I, lam1, TWO_PI_I)
    assert abs(lam1 * cmath.exp(track.tracked_point) - track.tracked_point) < 1e-9
    assert track.verify() < 1e-8

    rep = explab.density_scan(TWO_PI_I, 1.0, [0.01], [20, 40], 200, seed=42)
    assert rep.budget_monotone

    ppm = explab.render_parameter_plane((-4.0, 4.0, -4.0, 4.0), 8, 8)
    assert ppm.startswith(b"P6\n8 8\n255\n") and len(ppm) == 11 + 3 * 64

    try:
        explab.classify(0j)
    except ValueError:
        pass
    else:
        raise AssertionError("lambda = 0 must be rejected")

    print("explab python smoke test: ok")


if __name__ == "__main__":
    main()

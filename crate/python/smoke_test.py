"""Quick end-to-end check of the Python bindings.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/fracsmooth-*.whl
"""

import math

import fracsmooth as fs
from scipy.stats import norm


def main():
    model = fs.MarketModel(s0=1.0, sigma=1.0, mu=0.0, maturity=1.0)

    # digital price at t = 0 under zero rates: N(d2)
    binary = fs.Payoff.binary(1.0)
    assert abs(binary.price(model, 0.0, 1.0) - norm.cdf(-0.5)) < 1e-12

    call = fs.Payoff.call(1.0)
    assert abs(call.delta(model, 0.0, 1.0) - norm.cdf(0.5)) < 1e-12

    net = fs.TimeNet(16, theta=0.5)
    assert len(net) == 17 and net.nodes[0] == 0.0 and net.nodes[-1] == 1.0

    errs = fs.tracking_errors(binary, model, net, 2000, seed=7)
    assert len(errs) == 2000 and all(math.isfinite(e) for e in errs)
    assert errs == fs.tracking_errors(binary, model, net, 2000, seed=7)

    # an affine claim is hedged exactly
    l2, _ = fs.l2_tracking_error(fs.Payoff.affine(0.5, 2.0), model, net, 500)
    assert l2 < 1e-12

    fit = fs.fit_rate([8, 16, 32, 64, 128], [0.5 * n ** -0.5 for n in (8, 16, 32, 64, 128)])
    assert abs(fit["slope"] + 0.5) < 1e-12

    sweep = fs.hedge_sweep(binary, model, 1.0, [8, 16, 32, 64, 128], 4000, seed=1)
    assert sweep["fit"]["slope_lo"] < sweep["fit"]["slope"] < sweep["fit"]["slope_hi"]

    curves = fs.smoothness_curves(binary, model, depth=16)
    assert 0.4 < curves["theta_hat"] < 0.6

    alpha = fs.indicator_chaos(0.0, 64)
    assert abs(alpha[0] - 0.5) < 1e-15
    assert fs.d12_norm(alpha) > 0.0

    clock = fs.clock_a(binary, model, 0.4, 200, seed=3)
    assert len(clock["a"]) == 200 and clock["mean"] > 0.0

    try:
        fs.MarketModel(sigma=-1.0)
    except ValueError as e:
        assert "sigma" in str(e)
    else:
        raise AssertionError("negative sigma accepted")

    print("smoke test ok", fs.__version__)


if __name__ == "__main__":
    main()

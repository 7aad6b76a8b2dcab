import numpy as np
import pytest

import obo
from obo.hypergrad import aid_gradient_at, inner_solve
from obo.metrics import RunLog
from obo.optimizers import OracleWindow, initial_state, oagd_step, ogd_step, sobow_step


@pytest.fixture(scope="session")
def quad_stream():
    cfg = obo.StreamConfig(family="quadratic", horizon=40, seed=101)
    return obo.make_quadratic_stream(cfg)


@pytest.fixture(scope="session")
def hr_stream():
    cfg = obo.StreamConfig(
        family="hyper_rep",
        horizon=30,
        seed=202,
        noise_std=0.1,
        hyper_rep=obo.HyperRepParams(p=8, d=3, batch_f=4, batch_g=4, gamma=1.0),
    )
    return obo.make_hr_stream(cfg)


@pytest.fixture(scope="session")
def ho_stream():
    cfg = obo.StreamConfig(
        family="hyperopt",
        horizon=20,
        seed=303,
        noise_std=0.5,
        hyperopt=obo.HyperOptParams(
            classes=3, features=6, batch_train=8, batch_val=8, lam_lo=-1.0, lam_hi=1.0
        ),
    )
    return obo.make_ho_stream(cfg)


def drive(stream, optimizer, ocfg, x1, y1, rounds=None):
    """Run an optimizer over a stream, returning the state/log series."""
    state = initial_state(x1, y1, ocfg)
    past = OracleWindow(capacity=ocfg.k_window - 1)
    xs, ys, logs = [], [], []
    for oracle in list(stream)[: rounds if rounds is not None else len(stream)]:
        if optimizer == "sobow":
            state, lg = sobow_step(state, oracle, ocfg)
        elif optimizer == "ogd":
            state, lg = ogd_step(state, oracle, ocfg)
        elif optimizer == "oagd":
            state, lg, past = oagd_step(state, oracle, past, ocfg)
        else:
            raise ValueError(optimizer)
        xs.append(state.x)
        ys.append(state.y)
        logs.append(lg)
    return xs, ys, logs


def build_run_log(stream, optimizer, ocfg, x1, y1, rounds=None):
    """Drive a run and assemble the metrics-facing trace."""
    _, _, logs = drive(stream, optimizer, ocfg, x1, y1, rounds=rounds)
    d2 = stream.config.d2
    exact, ystars, fopts, ystar_prev, fprev = [], [], [], [], []
    prev_x = None
    warm = None
    for oracle, lg in zip(stream, logs):
        if oracle.has_exact_inner:
            ystar = oracle.y_star(lg.x)
        else:
            ystar = inner_solve(oracle, lg.x, tol=1e-10, y0=warm)
        warm = ystar
        exact.append(aid_gradient_at(oracle, lg.x, ystar, 1e-10))
        ystars.append(ystar)
        fopts.append(oracle.f_value(lg.x, ystar))
        if prev_x is None:
            ystar_prev.append(np.full(d2, np.nan))
            fprev.append(np.nan)
        else:
            yp = oracle.y_star(prev_x) if oracle.has_exact_inner else inner_solve(
                oracle, prev_x, tol=1e-10, y0=ystar
            )
            ystar_prev.append(yp)
            fprev.append(oracle.f_value(prev_x, yp))
        prev_x = lg.x
    return RunLog(
        x=np.stack([lg.x for lg in logs]),
        y_next=np.stack([lg.y_next for lg in logs]),
        est_grad=np.stack([lg.record.grad for lg in logs]),
        exact_grad=np.stack(exact),
        y_star=np.stack(ystars),
        f_at_opt=np.asarray(fopts),
        y_star_at_prev_x=np.stack(ystar_prev),
        f_at_prev_x=np.asarray(fprev),
        wallclock_ns=np.zeros(len(logs), dtype=np.int64),
    )


def quad_opt_config(stream, **overrides):
    l1 = stream.constants.l1
    base = dict(alpha=1.0 / l1, beta=0.05, eta=0.95, k_window=10, lambda_solver=1.0 / l1)
    base.update(overrides)
    return obo.OptimizerConfig(**base)

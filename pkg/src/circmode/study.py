"""Monte Carlo rejection-rate studies over the built-in models.

Each replicate ``r`` of model ``m`` at sample size ``n`` draws its data and
its bootstrap seed from streams keyed by ``(seed, m, n, r)``, so results do
not depend on the worker count or on which other models are in the run.
"""

import csv
import io
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_k, child_rng
from .exceptions import CircModeError
from .models import MixtureModel, PrimitiveModel, get_model
from .modetest import excess_mass_test, watson_test

log = logging.getLogger(__name__)

TESTS = {"excess-mass": excess_mass_test, "watson": watson_test}


def _model_key(model):
    return zlib.crc32(model.id.encode()) if model.id else 0


def _resolve(model):
    if isinstance(model, MixtureModel):
        return model
    if isinstance(model, PrimitiveModel):
        return MixtureModel((1.0,), (model,))
    return get_model(model)


def replicate_pvalues(model, k, n, rep, B, seed, tests=("excess-mass",)):
    """p-values of every test on replicate ``rep`` (NaN when a test fails)."""
    key = (_model_key(model), n, rep)
    sample = model.sample(n, child_rng(seed, *key, 0))
    test_seed = int(child_rng(seed, *key, 1).integers(0, 2**62))
    out = {}
    for name in tests:
        try:
            out[name] = TESTS[name](sample, k, B=B, random_state=test_seed).pvalue
        except CircModeError as exc:
            log.warning("%s rep %d %s failed: %s", model.id, rep, name, exc)
            out[name] = float("nan")
    return out


def _rep_chunk(model, k, n, reps, B, seed, tests):
    return [replicate_pvalues(model, k, n, r, B, seed, tests) for r in reps]


@dataclass
class StudyTable:
    """Rejection rates with 95% Monte Carlo half-widths ``1.96 sqrt(r(1-r)/reps)``."""

    rows: list = field(default_factory=list)

    FIELDS = ("model", "n", "k", "test", "alpha", "rate", "halfwidth", "reps", "failed")

    def rate(self, model, test, alpha, n=None):
        for row in self.rows:
            if (row["model"] == model and row["test"] == test
                    and np.isclose(row["alpha"], alpha) and (n is None or row["n"] == n)):
                return row["rate"], row["halfwidth"]
        raise KeyError((model, test, alpha, n))

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({**row, "rate": f"{row['rate']:.6f}",
                             "halfwidth": f"{row['halfwidth']:.6f}"})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_text(self):
        """Aligned table: one line per model, test and n; one column per alpha."""
        alphas = sorted({row["alpha"] for row in self.rows})
        groups = {}
        for row in self.rows:
            groups.setdefault((row["model"], row["test"], row["n"], row["k"]), {})[
                row["alpha"]] = f"{row['rate']:.3f}({row['halfwidth']:.3f})"
        header = ["model", "test", "n", "k"] + [f"a={a:g}" for a in alphas]
        lines = [header] + [[m, t, str(n), str(k)] + [cells.get(a, "-") for a in alphas]
                            for (m, t, n, k), cells in groups.items()]
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths))
                         for line in lines) + "\n"


def run_study(models, k=1, n=200, reps=500, B=500, alphas=(0.01, 0.05, 0.10), seed=0,
              workers=1, tests=("excess-mass",)):
    """Rejection rates of the mode tests over models and sample sizes.

    Parameters
    ----------
    models : sequence
        Model ids (``"M1"``...), :class:`MixtureModel` or :class:`PrimitiveModel`.
    k : int
        Number of modes under the null hypothesis.
    n : int or sequence of int
        Sample sizes.
    reps : int
        Replicates per model and sample size.
    B : int
        Bootstrap resamples per test.
    alphas : sequence of float
        Significance levels.
    seed : int
        Master seed.
    workers : int
        Processes over replicates; results do not depend on it.
    tests : sequence of str
        Any of ``"excess-mass"``, ``"watson"``.

    Returns
    -------
    StudyTable
    """
    k = check_k(k)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    unknown = set(tests) - set(TESTS)
    if unknown:
        raise ValueError(f"unknown tests {sorted(unknown)}")
    sizes = [int(n)] if np.ndim(n) == 0 else [int(x) for x in n]
    models = [_resolve(m) for m in models]
    table = StudyTable()
    for model in models:
        for size in sizes:
            pvals = _collect(model, k, size, reps, B, seed, tuple(tests), workers)
            for name in tests:
                p = np.array([d[name] for d in pvals])
                ok = p[np.isfinite(p)]
                for alpha in alphas:
                    r = float(np.mean(ok <= alpha)) if ok.size else float("nan")
                    hw = 1.96 * np.sqrt(r * (1 - r) / ok.size) if ok.size else float("nan")
                    table.rows.append({"model": model.id or "custom", "n": size, "k": k,
                                       "test": name, "alpha": float(alpha), "rate": r,
                                       "halfwidth": float(hw), "reps": int(ok.size),
                                       "failed": int(p.size - ok.size)})
    return table


def _collect(model, k, n, reps, B, seed, tests, workers):
    workers = max(1, int(workers))
    if workers == 1:
        return _rep_chunk(model, k, n, range(reps), B, seed, tests)
    parts = [list(r) for r in np.array_split(np.arange(reps), workers) if r.size]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(_rep_chunk, model, k, n, [int(i) for i in part], B, seed, tests)
                for part in parts]
        return [d for f in futs for d in f.result()]

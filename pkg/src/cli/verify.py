"""Verification suites: gradients, brute-force oracles and sampling statistics.

Each suite is a name -> check mapping in ``SUITES``; a check takes the
number of trials and a seeded Rng and returns a ``CheckResult``. Tests
inject faulty cases by patching these registries.
"""

import itertools
import time
from typing import Callable, Dict, List, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, Field

from ..config import EncoderConfig, LossConfig, ModelConfig, PromptConfig, TrainConfig
from ..encoders import VideoBatch, encode_tokens
from ..evalmetrics import accuracy, multilabel_map, retrieval_metrics
from ..numcore import (
    AttentionWeights,
    DiffArray,
    Rng,
    broadcast_to,
    concat,
    exp,
    finite_diff_check,
    gelu,
    l2_norm,
    layer_norm,
    linear,
    log,
    log_softmax,
    masked_attention,
    matmul,
    normalize,
    sigmoid,
    softmax,
    tanh,
)
from ..prompting import (
    PromptBasis,
    draw_without_replacement,
    mixture_distribution,
    orthonormal_rows,
    recon_loss,
    select_topk,
)
from ..training import build_model, gamma_at, info_nce, total_loss

logger = structlog.get_logger(__name__)

GRAD_TOLERANCE = 1e-5
ORACLE_TOLERANCE = 1e-9
TV_TOLERANCE = 0.05


class CheckResult(BaseModel):
    suite: str
    name: str
    passed: bool
    value: float = Field(description="Worst observed error or distance")
    threshold: float
    trials: int
    seconds: float = 0.0
    detail: str = ""


class SuiteReport(BaseModel):
    suite: str
    passed: bool
    checks: List[CheckResult] = Field(default_factory=list)


Check = Callable[[int, Rng], CheckResult]
Case = Callable[[Rng], Tuple[Callable[[], DiffArray], List[DiffArray]]]


def _leaf(rng: Rng, *shape: int, positive: bool = False) -> DiffArray:
    values = rng.normal(shape)
    return DiffArray(np.abs(values) + 0.5 if positive else values, requires_grad=True)


def _weighted(out: DiffArray, rng: Rng) -> Callable[[DiffArray], DiffArray]:
    weights = DiffArray(rng.normal(out.shape))
    return lambda y: (y * weights).sum()


def _unary(kernel: Callable[[DiffArray], DiffArray], positive: bool = False) -> Case:
    def case(rng: Rng):
        x = _leaf(rng, 3, 5, positive=positive)
        reduce = _weighted(kernel(x), rng.child("weights"))
        return (lambda: reduce(kernel(x))), [x]

    return case


def _layer_norm_case(rng: Rng):
    x, gain, bias = _leaf(rng, 3, 6), _leaf(rng.child("g"), 6), _leaf(rng.child("b"), 6)
    reduce = _weighted(layer_norm(x, gain, bias), rng.child("weights"))
    return (lambda: reduce(layer_norm(x, gain, bias))), [x, gain, bias]


def _linear_case(rng: Rng):
    x, W, b = _leaf(rng, 2, 3, 4), _leaf(rng.child("W"), 4, 5), _leaf(rng.child("b"), 5)
    reduce = _weighted(linear(x, W, b), rng.child("weights"))
    return (lambda: reduce(linear(x, W, b))), [x, W, b]


def _matmul_case(rng: Rng):
    a, b = _leaf(rng, 2, 3, 4), _leaf(rng.child("b"), 4, 2)
    reduce = _weighted(matmul(a, b), rng.child("weights"))
    return (lambda: reduce(matmul(a, b))), [a, b]


def _concat_case(rng: Rng):
    a, b = _leaf(rng, 2, 3), _leaf(rng.child("b"), 2, 4)
    reduce = _weighted(concat([a, b], axis=1), rng.child("weights"))
    return (lambda: reduce(tanh(concat([a, b], axis=1)))), [a, b]


def _broadcast_case(rng: Rng):
    x = _leaf(rng, 1, 4)
    reduce = _weighted(broadcast_to(x, (3, 4)), rng.child("weights"))
    return (lambda: reduce(broadcast_to(x, (3, 4)) * broadcast_to(x, (3, 4)))), [x]


def _attention_case(rng: Rng):
    d, heads = 4, 2
    q = _leaf(rng, 2, 5, d)
    weights = AttentionWeights(*[_leaf(rng.child(f"w{i}"), *((d, d) if i % 2 == 0 else (d,))) for i in range(6)])
    mask = rng.uniform((5, 5)) < 0.6
    mask[np.arange(5), np.arange(5)] = True

    def f():
        return reduce(masked_attention(q, q, mask, heads, weights))

    reduce = _weighted(masked_attention(q, q, mask, heads, weights), rng.child("weights"))
    return f, [q, *weights]


def _info_nce_case(rng: Rng):
    v, t = _leaf(rng, 4, 8), _leaf(rng.child("t"), 4, 8)
    return (lambda: info_nce(normalize(v), normalize(t), 0.07)), [v, t]


KERNEL_CASES: Dict[str, Case] = {
    "exp": _unary(exp),
    "log": _unary(log, positive=True),
    "tanh": _unary(tanh),
    "sigmoid": _unary(sigmoid),
    "gelu": _unary(gelu),
    "l2_norm": _unary(lambda x: l2_norm(x, axis=-1)),
    "normalize": _unary(normalize),
    "softmax": _unary(softmax),
    "log_softmax": _unary(log_softmax),
    "layer_norm": _layer_norm_case,
    "linear": _linear_case,
    "matmul": _matmul_case,
    "concat": _concat_case,
    "broadcast_to": _broadcast_case,
    "masked_attention": _attention_case,
    "info_nce": _info_nce_case,
}


def micro_config(seed: int) -> ModelConfig:
    """The smallest Ego-VPA model that still exercises every path."""
    return ModelConfig(
        encoder=EncoderConfig(
            L=2, d_txt=8, d_vid=8, embed_dim=8, T=2, N_p=2, N_w=4, heads=2, vocab=16, patch_dim=4, mlp_ratio=2
        ),
        prompting=PromptConfig(M_v=2, M_t=2, K=1, k=2, B=4, d_f=4, query_mode="topk"),
        loss=LossConfig(tau=0.5, **{"lambda": 0.5}),
        train=TrainConfig(method="ego-vpa", seed=seed),
    )


def _ego_vpa_case(rng: Rng):
    cfg = micro_config(int(rng.integers(0, 2 ** 31)))
    model, method = build_model(cfg)
    enc = cfg.encoder
    video = VideoBatch(rng.normal((2, enc.T, enc.N_p, enc.patch_dim)))
    text = encode_tokens([[4, 5, 6], [7, 8]], enc.N_w)

    def f():
        pack = method.build_pack(training=True)
        v = model.encode_video(video, pack)
        t = model.encode_text(text, pack)
        return total_loss(info_nce(v, t, cfg.loss.tau), method.synthesis_loss(pack), cfg.loss)

    return f, [model.store[name] for name in method.trainable]


def _check(suite: str, name: str, value: float, threshold: float, trials: int, started: float, detail: str = ""):
    return CheckResult(
        suite=suite,
        name=name,
        passed=bool(value <= threshold),
        value=float(value),
        threshold=threshold,
        trials=trials,
        seconds=time.perf_counter() - started,
        detail=detail,
    )


def _kernel_check(name: str, case: Case) -> Check:
    def check(trials: int, rng: Rng) -> CheckResult:
        started = time.perf_counter()
        worst = 0.0
        for trial in range(trials):
            f, leaves = case(rng.child(f"{name}/{trial}"))
            worst = max(worst, finite_diff_check(f, leaves, floor=1e-6))
        return _check("grad", name, worst, GRAD_TOLERANCE, trials, started)

    return check


def check_ego_vpa_loss(trials: int, rng: Rng) -> CheckResult:
    started = time.perf_counter()
    worst = 0.0
    for trial in range(trials):
        trial_rng = rng.child(f"ego-vpa/{trial}")
        f, leaves = _ego_vpa_case(trial_rng)
        worst = max(worst, finite_diff_check(f, leaves, max_components=3, by_magnitude=True))
    return _check("grad", "ego_vpa_loss", worst, GRAD_TOLERANCE, trials, started)


def grad_suite() -> Dict[str, Check]:
    checks = {name: _kernel_check(name, case) for name, case in KERNEL_CASES.items()}
    checks["ego_vpa_loss"] = check_ego_vpa_loss
    return checks


def _exhaustive_residuals(hz: np.ndarray, F: np.ndarray, k: int) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    """Least-squares residual of ``hz`` on every k-subset of rows, solved directly."""
    subsets = list(itertools.combinations(range(F.shape[0]), k))
    rows = F[np.array(subsets)]
    gram = rows @ np.swapaxes(rows, -1, -2)
    coef = np.linalg.solve(gram, (rows @ hz)[..., None])[..., 0]
    fitted = np.einsum("sk,skd->sd", coef, rows)
    return np.linalg.norm(hz - fitted, axis=-1), subsets


def check_topk_exhaustive(trials: int, rng: Rng) -> CheckResult:
    started = time.perf_counter()
    worst_gap = 0.0
    mismatches = 0
    for trial in range(trials):
        r = rng.child(f"topk/{trial}")
        B = int(r.integers(2, 11))
        d_f = B + int(r.integers(0, 5))
        basis = PromptBasis(DiffArray(orthonormal_rows(B, d_f, r.child("F"))))
        hz = r.normal(d_f)
        dots = np.sort(np.abs(basis.F.values @ hz))
        distinct = np.all(np.diff(dots) > 1e-9)
        for k in range(1, B + 1):
            selection = select_topk(DiffArray(hz), basis, k)
            ours = recon_loss(DiffArray(hz), selection, basis).item()
            residuals, subsets = _exhaustive_residuals(hz, basis.F.values, k)
            best = int(np.argmin(residuals))
            worst_gap = max(worst_gap, ours - residuals[best])
            if distinct and tuple(sorted(selection.indices.tolist())) != subsets[best]:
                mismatches += 1
    value = max(worst_gap, 0.0) if not mismatches else float("inf")
    return _check(
        "oracle", "topk_vs_exhaustive", value, ORACLE_TOLERANCE, trials, started,
        f"max residual gap {worst_gap:.3e}; index-set mismatches {mismatches}",
    )


def check_energy_identity(trials: int, rng: Rng) -> CheckResult:
    """recon^2 + |alpha|^2 equals |hz|^2 for an orthonormal basis."""
    started = time.perf_counter()
    worst = 0.0
    for trial in range(trials):
        r = rng.child(f"energy/{trial}")
        B = int(r.integers(1, 11))
        d_f = B + int(r.integers(0, 5))
        basis = PromptBasis(DiffArray(orthonormal_rows(B, d_f, r.child("F"))))
        hz = DiffArray(r.normal(d_f))
        selection = select_topk(hz, basis, int(r.integers(1, B + 1)))
        residual = recon_loss(hz, selection, basis).item()
        lhs = residual ** 2 + float(np.sum(selection.alpha.values ** 2))
        worst = max(worst, abs(lhs - float(hz.values @ hz.values)))
    return _check("oracle", "energy_identity", worst, ORACLE_TOLERANCE, trials, started)


def _order(scores: np.ndarray) -> List[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def naive_ap(scores: np.ndarray, relevant: np.ndarray) -> float:
    hits, precisions = 0, []
    for rank, i in enumerate(_order(scores), start=1):
        if relevant[i]:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions) if precisions else 0.0


def naive_ndcg(scores: np.ndarray, gains: np.ndarray) -> float:
    dcg = sum(gains[i] / np.log2(rank + 1) for rank, i in enumerate(_order(scores), start=1))
    ideal = sum(g / np.log2(rank + 1) for rank, g in enumerate(sorted(gains, reverse=True), start=1))
    return dcg / ideal if ideal > 0 else 0.0


def _tied_scores(r: Rng, shape) -> np.ndarray:
    # coarse rounding produces ties on purpose
    return np.round(r.normal(shape), 1)


def check_metric_oracles(trials: int, rng: Rng) -> CheckResult:
    started = time.perf_counter()
    worst = 0.0
    for trial in range(trials):
        r = rng.child(f"metrics/{trial}")
        n, C = int(r.integers(1, 9)), int(r.integers(1, 6))

        scores = _tied_scores(r, (n, C))
        relevance = r.uniform((n, C)) < 0.4
        aps = [naive_ap(scores[:, c], relevance[:, c]) for c in range(C) if relevance[:, c].any()]
        expected = sum(aps) / len(aps) if aps else 0.0
        worst = max(worst, abs(multilabel_map(scores, relevance)["mAP"] - expected))

        labels = r.integers(0, C, n)
        ours = accuracy(scores, labels)
        correct = [int(max(range(C), key=lambda c: (scores[i, c], -c)) == labels[i]) for i in range(n)]
        recalls = [np.mean([correct[i] for i in range(n) if labels[i] == c]) for c in sorted(set(labels.tolist()))]
        worst = max(worst, abs(ours["top1"] - np.mean(correct)), abs(ours["mean_class"] - np.mean(recalls)))

        sim = _tied_scores(r, (n, n))
        gains = np.round(r.uniform((n, n)), 2) * (r.uniform((n, n)) < 0.5)
        gains[np.arange(n), np.arange(n)] = 1.0
        report = retrieval_metrics(sim, gains)
        for prefix, s, g in (("v2t", sim, gains), ("t2v", sim.T, gains.T)):
            naive_map = np.mean([naive_ap(s[q], g[q] > 0) for q in range(n)])
            naive_gain = np.mean([naive_ndcg(s[q], g[q]) for q in range(n)])
            worst = max(worst, abs(report[f"{prefix}_mAP"] - naive_map), abs(report[f"{prefix}_nDCG"] - naive_gain))
    return _check("oracle", "metric_oracles", worst, ORACLE_TOLERANCE, trials, started)


def oracle_suite() -> Dict[str, Check]:
    return {
        "topk_vs_exhaustive": check_topk_exhaustive,
        "energy_identity": check_energy_identity,
        "metric_oracles": lambda trials, rng: check_metric_oracles(max(1, trials // 5), rng),
    }


def _frequencies(picks: np.ndarray, B: int) -> np.ndarray:
    return np.bincount(picks.reshape(-1), minlength=B) / picks.size


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


DRAWS = 100_000


def check_uniform_sampling(trials: int, rng: Rng) -> CheckResult:
    """gamma = 0 with equal counts draws every row equally often."""
    started = time.perf_counter()
    B = 10
    scores = rng.normal((1, B))
    probs = np.repeat(mixture_distribution(scores, np.zeros(B, dtype=np.int64), 0.0), DRAWS, axis=0)
    tv = total_variation(_frequencies(draw_without_replacement(probs, 1, rng.child("draws")), B), np.full(B, 1.0 / B))
    return _check("stats", "uniform_sampling", tv, TV_TOLERANCE, DRAWS, started)


def check_similarity_sampling(trials: int, rng: Rng) -> CheckResult:
    """gamma = 1 draws follow the similarity softmax whatever the counts."""
    started = time.perf_counter()
    B = 10
    scores = rng.normal((1, B))
    counts = rng.integers(0, 50, B)
    target = mixture_distribution(scores, counts, 1.0)[0]
    probs = np.repeat(target[None], DRAWS, axis=0)
    tv = total_variation(_frequencies(draw_without_replacement(probs, 1, rng.child("draws")), B), target)
    return _check("stats", "similarity_sampling", tv, TV_TOLERANCE, DRAWS, started)


def check_inverse_frequency(trials: int, rng: Rng) -> CheckResult:
    """gamma = 0 favours rarely chosen rows in proportion to 1 / (count + 1)."""
    started = time.perf_counter()
    B = 10
    counts = rng.integers(0, 20, B)
    target = 1.0 / (counts + 1.0)
    target /= target.sum()
    probs = np.repeat(mixture_distribution(rng.normal((1, B)), counts, 0.0), DRAWS, axis=0)
    tv = total_variation(_frequencies(draw_without_replacement(probs, 1, rng.child("draws")), B), target)
    return _check("stats", "inverse_frequency", tv, TV_TOLERANCE, DRAWS, started)


def check_distinct_draws(trials: int, rng: Rng) -> CheckResult:
    started = time.perf_counter()
    B, k = 10, 4
    probs = np.repeat(mixture_distribution(rng.normal((1, B)), np.zeros(B, dtype=np.int64), 0.5), DRAWS // 10, axis=0)
    picks = draw_without_replacement(probs, k, rng.child("draws"))
    repeats = int(sum(len(set(row.tolist())) != k for row in picks))
    return _check("stats", "distinct_draws", float(repeats), 0.0, len(picks), started)


def check_gamma_endpoints(trials: int, rng: Rng) -> CheckResult:
    started = time.perf_counter()
    worst = 0.0
    for epochs in (2, 5, 10, 20, 50):
        for ramp in (0.25, 0.5, 1.0):
            worst = max(worst, abs(gamma_at(0, epochs, ramp)), abs(gamma_at(epochs, epochs, ramp) - 1.0))
    return _check("stats", "gamma_endpoints", worst, 0.0, 15, started)


def stats_suite() -> Dict[str, Check]:
    return {
        "uniform_sampling": check_uniform_sampling,
        "similarity_sampling": check_similarity_sampling,
        "inverse_frequency": check_inverse_frequency,
        "distinct_draws": check_distinct_draws,
        "gamma_endpoints": check_gamma_endpoints,
    }


SUITES: Dict[str, Callable[[], Dict[str, Check]]] = {
    "grad": grad_suite,
    "oracle": oracle_suite,
    "stats": stats_suite,
}

DEFAULT_TRIALS = {"grad": 100, "oracle": 1000, "stats": 1}


def run_suite(suite: str, trials: int = 0, seed: int = 0) -> SuiteReport:
    trials = trials or DEFAULT_TRIALS[suite]
    rng = Rng(seed).child(suite)
    checks = []
    for name, check in SUITES[suite]().items():
        result = check(trials, rng.child(name))
        log = logger.info if result.passed else logger.error
        log("verification check", suite=suite, check=name, passed=result.passed, value=result.value)
        checks.append(result)
    return SuiteReport(suite=suite, passed=all(c.passed for c in checks), checks=checks)

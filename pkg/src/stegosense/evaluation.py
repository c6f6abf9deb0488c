"""Desk-scale detectability experiments.

Covers are embedded with each cost method, residual-histogram features
are extracted, a logistic detector is trained on one split and its
detection error ``P_E = (FP rate + FN rate) / 2`` is measured on the other.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costs import DEFAULT_FILTER_SIZE, cost_from_sensitivity, hill_cost, second_derivative_map
from .embedding import InfeasiblePayloadError, simulate_embedding
from .features import DEFAULT_T, residual_histogram
from .image_io import check_image, desk_corpus, load_pgm
from .linear_model import make_logistic_pipeline
from .oracles import FilterLogitOracle, ModelOracle, load_oracle, train_linear_oracle
from .rng import derive_seed

REPORT_VERSION = 1
MIN_COVERS = 40
METHODS = ("proposed", "hill")
DEFAULT_RULES = {"proposed": "capped", "hill": "gibbs"}

# sub-stream keys for derive_seed
_ORACLE_STREAM = 1
_DETECTOR_STREAM = 2


def extract_features(img, T: int = DEFAULT_T) -> np.ndarray:
    return residual_histogram(img, T)


def train_detector(cover_features, stego_features, seed: int = 0, epochs: int = 100, rate: float = 0.05):
    """Logistic detector (standardize + SGD) for cover=0 / stego=1."""
    F = np.asarray(cover_features, dtype=np.float64)
    G = np.asarray(stego_features, dtype=np.float64)
    if len(F) == 0 or len(F) != len(G):
        raise ValueError(f"need equal, nonempty feature lists (got {len(F)} and {len(G)})")
    X = np.vstack([F, G])
    y = np.r_[np.zeros(len(F)), np.ones(len(G))].astype(int)
    return make_logistic_pipeline(epochs=epochs, rate=rate, seed=seed).fit(X, y)


def detection_rates(model, cover_features, stego_features) -> tuple[float, float, float]:
    """(P_E, FP rate, FN rate). A stego probability of exactly 0.5 counts as cover."""
    F = np.asarray(cover_features, dtype=np.float64)
    G = np.asarray(stego_features, dtype=np.float64)
    if len(F) == 0 or len(G) == 0:
        raise ValueError("detection error needs nonempty cover and stego sets")
    fp = float(np.mean(model.predict_proba(F)[:, 1] > 0.5))
    fn = float(np.mean(model.predict_proba(G)[:, 1] <= 0.5))
    return (fp + fn) / 2.0, fp, fn


def detection_error(model, cover_features, stego_features) -> float:
    return detection_rates(model, cover_features, stego_features)[0]


# -- sweep configuration ----------------------------------------------------


def covers_digest(covers) -> str:
    h = hashlib.sha256()
    for c in covers:
        h.update(np.asarray(c.shape, dtype="<u4").tobytes())
        h.update(np.ascontiguousarray(c).tobytes())
    return h.hexdigest()


@dataclass
class SweepConfig:
    """Everything :func:`run_sweep` needs.

    ``oracle=None`` trains a :class:`LinearResidualOracle` on the training
    covers against HILL stegos (settings in ``oracle_training``).
    """

    covers: list
    oracle: ModelOracle | None = None
    methods: tuple = METHODS
    filter_sizes: tuple = (DEFAULT_FILTER_SIZE,)
    payloads: tuple = (0.4,)
    seeds: tuple = (0,)
    n_train: int | None = None
    split_seed: int = 0
    train_indices: list | None = None
    test_indices: list | None = None
    rules: dict = field(default_factory=lambda: dict(DEFAULT_RULES))
    detector: dict = field(default_factory=lambda: {"epochs": 100, "rate": 0.05})
    oracle_training: dict = field(default_factory=lambda: {"payload": 0.4, "epochs": 50, "rate": 0.05, "seed": 0})
    threads: int = 1
    record_timing: bool = False
    covers_source: dict = field(default_factory=dict)
    oracle_source: dict = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.covers) < MIN_COVERS:
            raise ValueError(f"a sweep needs at least {MIN_COVERS} covers, got {len(self.covers)}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown cost method {m!r}")
            if self.rules.get(m) not in ("gibbs", "capped"):
                raise ValueError(f"no valid embedding rule for method {m!r}")
        if not self.methods or not self.payloads or not self.seeds:
            raise ValueError("methods, payloads and seeds must be nonempty")
        if "proposed" in self.methods and not self.filter_sizes:
            raise ValueError("filter_sizes must be nonempty for the proposed method")
        for k in self.filter_sizes:
            if int(k) != k or k < 1 or k % 2 == 0:
                raise ValueError(f"filter size must be a positive odd integer, got {k}")
        for a in self.payloads:
            if not 0 <= a <= np.log2(3):
                raise ValueError(f"payload {a} outside [0, log2 3]")

    def split(self) -> tuple[list[int], list[int]]:
        n = len(self.covers)
        if self.train_indices is not None or self.test_indices is not None:
            if self.train_indices is None or self.test_indices is None:
                raise ValueError("give both train_indices and test_indices, or neither")
            train, test = [int(i) for i in self.train_indices], [int(i) for i in self.test_indices]
        else:
            n_train = n // 2 if self.n_train is None else int(self.n_train)
            if not 0 < n_train < n:
                raise ValueError(f"n_train must be in (0, {n})")
            perm = np.random.default_rng(self.split_seed).permutation(n)
            train, test = sorted(perm[:n_train].tolist()), sorted(perm[n_train:].tolist())
        if set(train) & set(test):
            raise ValueError(f"train/test split overlaps on covers {sorted(set(train) & set(test))[:5]}")
        if not train or not test or min(train + test) < 0 or max(train + test) >= n:
            raise ValueError("split indices must be nonempty and within the cover list")
        if len(set(train)) != len(train) or len(set(test)) != len(test):
            raise ValueError("split indices must not repeat")
        return train, test

    def describe(self) -> dict:
        train, test = self.split()
        return {
            "covers": {
                **self.covers_source,
                "count": len(self.covers),
                "shapes": sorted({f"{c.shape[1]}x{c.shape[0]}" for c in self.covers}),
                "sha256": covers_digest(self.covers),
            },
            "oracle": dict(self.oracle_source),
            "methods": list(self.methods),
            "filter_sizes": [int(k) for k in self.filter_sizes],
            "payloads": [float(a) for a in self.payloads],
            "seeds": [int(s) for s in self.seeds],
            "split": {"seed": self.split_seed, "train": train, "test": test},
            "rules": {m: self.rules[m] for m in self.methods},
            "detector": dict(self.detector),
            "oracle_training": dict(self.oracle_training),
        }

    @classmethod
    def from_dict(cls, spec: dict, base_dir=".") -> "SweepConfig":
        """Build a config from its JSON form (see the README for the schema)."""
        base = Path(base_dir)
        cov = spec.get("covers")
        if not isinstance(cov, dict):
            raise ValueError("config needs a 'covers' object")
        if "synthetic" in cov:
            syn = {"count": 200, "size": 64, "seed": 0, **cov["synthetic"]}
            kinds = tuple(syn.get("kinds", ())) or None
            covers = desk_corpus(syn["count"], syn["size"], syn["seed"], **({"kinds": kinds} if kinds else {}))
            source = {"synthetic": syn}
        elif "dir" in cov:
            d = base / cov["dir"]
            files = sorted(d.glob("*.pgm"))
            if not files:
                raise FileNotFoundError(f"no .pgm files in {d}")
            covers = [load_pgm(f) for f in files]
            source = {"dir": str(cov["dir"]), "files": [f.name for f in files]}
        else:
            raise ValueError("'covers' must contain 'synthetic' or 'dir'")

        o = spec.get("oracle", {"kind": "train"})
        kind = o.get("kind", "train")
        oracle_training = {"payload": 0.4, "epochs": 50, "rate": 0.05, "seed": 0}
        if kind == "train":
            oracle = None
            oracle_training.update({k: v for k, v in o.items() if k != "kind"})
        elif kind == "filter":
            oracle = FilterLogitOracle(o.get("gain", 1.0), o.get("bias", 0.0))
        elif kind == "file":
            path = base / o["path"]
            if not path.is_file():
                raise FileNotFoundError(f"oracle weights file not found: {path}")
            oracle = load_oracle(path)
        else:
            raise ValueError(f"unknown oracle kind {kind!r}")

        split = spec.get("split", {})
        detector = {"epochs": 100, "rate": 0.05, **spec.get("detector", {})}
        methods = tuple(spec.get("methods", METHODS))
        return cls(
            covers=covers,
            oracle=oracle,
            methods=methods,
            filter_sizes=tuple(spec.get("filter_sizes", (DEFAULT_FILTER_SIZE,))),
            payloads=tuple(spec.get("payloads", (0.4,))),
            seeds=tuple(spec.get("seeds", (0,))),
            n_train=split.get("train"),
            split_seed=split.get("seed", 0),
            train_indices=split.get("train_indices"),
            test_indices=split.get("test_indices"),
            rules={**DEFAULT_RULES, **spec.get("rules", {})},
            detector=detector,
            oracle_training=oracle_training,
            threads=int(spec.get("threads", 1)),
            covers_source=source,
            oracle_source=dict(o),
        )


# -- report -----------------------------------------------------------------


def _round12(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    return obj


@dataclass
class ExperimentReport:
    config: dict
    records: list
    version: int = REPORT_VERSION

    def to_json(self) -> str:
        doc = {"version": self.version, "config": self.config, "records": self.records}
        return json.dumps(_round12(doc), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        doc = json.loads(text)
        if doc.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {doc.get('version')}")
        return cls(doc["config"], doc["records"], doc["version"])

    def lookup(self, method: str, alpha: float, k=None, seed=None) -> list[dict]:
        return [
            r for r in self.records
            if r["method"] == method and r["alpha"] == alpha
            and (k is None or r["k"] == k) and (seed is None or r["seed"] == seed)
        ]

    def pe(self, method: str, alpha: float, k=None) -> float:
        """Mean P_E over seeds for one configuration."""
        recs = self.lookup(method, alpha, k)
        if not recs:
            raise KeyError((method, alpha, k))
        return float(np.mean([r["pe"] for r in recs]))


def format_table(report: ExperimentReport) -> str:
    lines = [f"{'method':<10}{'k':>4}{'alpha':>8}{'rule':>8}{'seed':>6}{'P_E':>9}"]
    for r in report.records:
        k = "-" if r["k"] is None else str(r["k"])
        lines.append(f"{r['method']:<10}{k:>4}{r['alpha']:>8.3f}{r['rule']:>8}{r['seed']:>6}{r['pe']:>9.4f}")
    return "\n".join(lines)


# -- the sweep --------------------------------------------------------------


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def train_sweep_oracle(covers, train: list[int], settings: dict, threads: int = 1):
    """Linear oracle fitted to training covers vs their HILL stegos."""
    alpha = float(settings.get("payload", 0.4))
    seed = int(settings.get("seed", 0))

    def hill_stego(i):
        return simulate_embedding(covers[i], hill_cost(covers[i]), alpha, "gibbs", derive_seed(seed, _ORACLE_STREAM, i)).stego

    stegos = _pool_map(hill_stego, train, threads)
    return train_linear_oracle(
        [covers[i] for i in train], stegos,
        epochs=int(settings.get("epochs", 50)), rate=float(settings.get("rate", 0.05)), seed=seed,
    )


def run_sweep(config: SweepConfig) -> ExperimentReport:
    config.validate()
    covers = [check_image(c) for c in config.covers]
    train, test = config.split()
    threads = max(1, int(config.threads))
    desc = config.describe()

    oracle = config.oracle
    if "proposed" in config.methods and oracle is None:
        oracle = train_sweep_oracle(covers, train, config.oracle_training, threads)
        desc["oracle"] = {**desc["oracle"], "kind": "train", "training_accuracy": oracle.training_accuracy}
    oracle_id = "none" if oracle is None else ("trained-linear" if config.oracle is None else oracle.kind)
    desc["oracle"]["id"] = oracle_id

    cover_feats = np.stack(_pool_map(extract_features, covers, threads))
    sensitivity = None
    if "proposed" in config.methods:
        sensitivity = _pool_map(lambda c: second_derivative_map(oracle, c), covers, threads)

    cost_cache = {}

    def costs_for(method, k):
        key = (method, k)
        if key not in cost_cache:
            if method == "hill":
                cost_cache[key] = _pool_map(hill_cost, covers, threads)
            else:
                cost_cache[key] = [cost_from_sensitivity(s, c, k) for s, c in zip(sensitivity, covers)]
        return cost_cache[key]

    records = []
    det = config.detector
    for seed in config.seeds:
        for method in config.methods:
            rule = config.rules[method]
            for k in (config.filter_sizes if method == "proposed" else (None,)):
                rhos = costs_for(method, k)
                for alpha in config.payloads:
                    t0 = time.perf_counter()

                    def embed(i):
                        try:
                            res = simulate_embedding(covers[i], rhos[i], alpha, rule, derive_seed(seed, i))
                        except InfeasiblePayloadError as exc:
                            raise InfeasiblePayloadError(exc.message_bits, exc.max_bits, covers[i].size) from exc
                        return extract_features(res.stego)

                    stego_feats = np.stack(_pool_map(embed, range(len(covers)), threads))
                    det_seed = derive_seed(seed, _DETECTOR_STREAM)
                    model = train_detector(
                        cover_feats[train], stego_feats[train], det_seed, det.get("epochs", 100), det.get("rate", 0.05)
                    )
                    pe, fp, fn = detection_rates(model, cover_feats[test], stego_feats[test])
                    rec = {
                        "method": method,
                        "oracle": oracle_id if method == "proposed" else None,
                        "k": None if k is None else int(k),
                        "alpha": float(alpha),
                        "rule": rule,
                        "pe": pe,
                        "fp_rate": fp,
                        "fn_rate": fn,
                        "seed": int(seed),
                        "embed_seeds": "derive_seed(seed, cover_index)",
                        "detector_seed": int(det_seed),
                        "split_seed": int(config.split_seed),
                        "n_train": len(train),
                        "n_test": len(test),
                    }
                    if config.record_timing:
                        rec["seconds"] = time.perf_counter() - t0
                    records.append(rec)

    records.sort(key=lambda r: (r["method"], -1 if r["k"] is None else r["k"], r["alpha"], r["seed"]))
    return ExperimentReport(desc, records)

"""Dataset generation: grow specifications from sampled patterns,
alternating on realizability, certify every artifact, filter circuits,
rebalance classes, and persist train/validation/test splits."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import aiger, ltl, mine, specs, synth
from .aiger import AigerCircuit
from .mine import PatternPool
from .specs import RealizabilityStatus, Specification
from .synth import Oracle, OracleConfig, OracleError

SPLIT_NAMES = ("train", "val", "test")


class DatagenError(Exception):
    pass


@dataclass(frozen=True)
class GenConfig:
    target_count: int = 1000
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    max_guarantees: int = 10
    max_assumptions: int = 3
    assumption_trials: int = 5
    oracle_timeout: float = 120.0
    var_index_cap: int = 50
    and_bucket_fraction: float = 0.20
    inputs: tuple[str, ...] = mine.DEFAULT_INPUTS
    outputs: tuple[str, ...] = mine.DEFAULT_OUTPUTS
    # alphabets used when instantiating patterns; desk-scale runs shrink
    # these so the bounded oracle's enumeration stays tractable
    instantiation_inputs: tuple[str, ...] = mine.DEFAULT_INPUTS
    instantiation_outputs: tuple[str, ...] = mine.DEFAULT_OUTPUTS
    attempt_factor: int = 50
    rebalance: bool = True

    def __post_init__(self):
        if self.target_count < 0:
            raise DatagenError("target_count must be non-negative")
        for cap in (self.max_guarantees, self.max_assumptions,
                    self.assumption_trials, self.var_index_cap):
            if cap <= 0:
                raise DatagenError("caps must be positive")
        if self.oracle_timeout <= 0 or self.and_bucket_fraction <= 0:
            raise DatagenError("timeouts and fractions must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise DatagenError("split fractions must sum to 1")
        if not set(self.instantiation_inputs) <= set(self.inputs) or \
                not set(self.instantiation_outputs) <= set(self.outputs):
            raise DatagenError("instantiation alphabets must be subsets of "
                               "the declared propositions")


@dataclass(frozen=True)
class DatasetSample:
    spec: Specification
    status: RealizabilityStatus
    circuit: AigerCircuit
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "spec": specs.spec_to_dict(self.spec),
            "status": self.status.value,
            "circuit": aiger.serialize(self.circuit),
            "meta": self.meta,
        }

    @staticmethod
    def from_dict(doc: dict) -> "DatasetSample":
        return DatasetSample(
            spec=specs.read_spec(json.dumps(doc["spec"])),
            status=RealizabilityStatus(doc["status"]),
            circuit=aiger.parse_aiger(doc["circuit"]),
            meta=dict(doc.get("meta", {})),
        )

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))


def sample_rng(seed: int, index: int) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------------------
# The generation loop

def generate_sample(pool: PatternPool, cfg: GenConfig, oracle: Oracle,
                    rng: random.Random, index: int = 0) -> list[DatasetSample]:
    """Grow one specification: append guarantees while realizable; on
    unrealizability, try up to `assumption_trials` assumptions to restore
    it (failures are discarded). Emits the terminal spec, plus the
    realizable predecessor when the terminal is unrealizable."""
    guarantee_pool = [(i, p) for i, p in enumerate(pool.guarantees)
                      if not p.is_trivial()]
    assumption_pool = [(i, p) for i, p in enumerate(pool.assumptions)
                       if not p.is_trivial()]
    if not guarantee_pool:
        raise DatagenError("guarantee pool is empty")

    assumptions: list[ltl.Ltl] = []
    guarantees: list[ltl.Ltl] = []
    a_ids: list[int] = []
    g_ids: list[int] = []
    last_real: Optional[tuple] = None  # (spec, result, g_ids, a_ids)
    oracle_mode = oracle.cfg.mode

    def make_spec(ass, gs) -> Specification:
        return Specification(cfg.inputs, cfg.outputs, tuple(ass), tuple(gs))

    def sample(state, status) -> DatasetSample:
        spec, result, gids, aids = state
        role = "system" if status is RealizabilityStatus.REALIZABLE else "env"
        meta = {
            "seed": cfg.seed,
            "sample_index": index,
            "guarantee_patterns": list(gids),
            "assumption_patterns": list(aids),
            "oracle_mode": oracle_mode,
            "elapsed": result.elapsed if oracle_mode == "external" else 0.0,
            "role_convention": role,
        }
        return DatasetSample(spec, status, result.artifact, meta)

    def emit_unreal(unreal) -> list[DatasetSample]:
        out = [sample(unreal, RealizabilityStatus.UNREALIZABLE)]
        if last_real is not None:
            out.append(sample(last_real, RealizabilityStatus.REALIZABLE))
        return out

    while len(guarantees) < cfg.max_guarantees:
        gi, gp = guarantee_pool[rng.randrange(len(guarantee_pool))]
        g = mine.instantiate(gp, rng, cfg.instantiation_inputs,
                             cfg.instantiation_outputs)
        candidate = make_spec(assumptions, guarantees + [g])
        result = oracle.query(candidate)
        if result.status is RealizabilityStatus.UNKNOWN:
            break
        if result.status is RealizabilityStatus.REALIZABLE:
            guarantees.append(g)
            g_ids.append(gi)
            last_real = (candidate, result, list(g_ids), list(a_ids))
            continue

        unreal = (candidate, result, g_ids + [gi], list(a_ids))
        rescued = False
        for _ in range(cfg.assumption_trials):
            if len(assumptions) >= cfg.max_assumptions or not assumption_pool:
                break
            ai, ap = assumption_pool[rng.randrange(len(assumption_pool))]
            a = mine.instantiate(ap, rng, cfg.instantiation_inputs,
                                 cfg.instantiation_outputs)
            candidate2 = make_spec(assumptions + [a], guarantees + [g])
            result2 = oracle.query(candidate2)
            if result2.status is RealizabilityStatus.REALIZABLE:
                assumptions.append(a)
                a_ids.append(ai)
                guarantees.append(g)
                g_ids.append(gi)
                last_real = (candidate2, result2, list(g_ids), list(a_ids))
                rescued = True
                break
            if result2.status is RealizabilityStatus.UNKNOWN:
                break
            # unrealizable: discard the trial assumption
        if rescued:
            continue
        return emit_unreal(unreal)

    if last_real is None:
        return []
    return [sample(last_real, RealizabilityStatus.REALIZABLE)]


# ---------------------------------------------------------------------------
# Circuit filters

class CircuitFilter:
    """Online dataset filters: max-variable-index cap, and the per-AND-count
    bucket cap (a sample with k AND gates is rejected if accepting it would
    push that bucket past fraction * size + 1)."""

    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        self.accepted = 0
        self.bucket_counts: Counter = Counter()
        self.dropped_var_index = 0
        self.dropped_bucket = 0

    def admit(self, s: DatasetSample) -> bool:
        if s.circuit.max_var > self.cfg.var_index_cap:
            self.dropped_var_index += 1
            return False
        k = s.circuit.num_and_gates
        limit = self.cfg.and_bucket_fraction * (self.accepted + 1) + 1
        if self.bucket_counts[k] + 1 > limit:
            self.dropped_bucket += 1
            return False
        self.bucket_counts[k] += 1
        self.accepted += 1
        return True


def apply_circuit_filters(samples: Iterable[DatasetSample],
                          cfg: GenConfig) -> list[DatasetSample]:
    filt = CircuitFilter(cfg)
    return [s for s in samples if filt.admit(s)]


def bucket_histogram(samples: Sequence[DatasetSample]) -> Counter:
    return Counter(s.circuit.num_and_gates for s in samples)


def rebalance(samples: Sequence[DatasetSample], cfg: GenConfig,
              rng: random.Random,
              target: Optional[int] = None) -> list[DatasetSample]:
    """Drop samples until the realizable/unrealizable counts differ by at
    most one, the AND-bucket caps hold, and (if given) the total is at
    most `target`. Surplus-class samples are preferred for every drop."""
    kept = list(samples)
    frac = cfg.and_bucket_fraction
    while True:
        n = len(kept)
        real = [i for i, s in enumerate(kept)
                if s.status is RealizabilityStatus.REALIZABLE]
        unreal = [i for i, s in enumerate(kept)
                  if s.status is not RealizabilityStatus.REALIZABLE]
        majority = real if len(real) >= len(unreal) else unreal
        hist = bucket_histogram(kept)
        over = [k for k, c in hist.items() if c > frac * n + 1]
        if over:
            bucket = max(over, key=lambda k: hist[k] - frac * n)
            pool = [i for i in majority
                    if kept[i].circuit.num_and_gates == bucket]
            pool = pool or [i for i, s in enumerate(kept)
                            if s.circuit.num_and_gates == bucket]
        elif abs(len(real) - len(unreal)) > 1:
            pool = majority
        elif target is not None and n > target:
            # shed from the fullest bucket so the scaled caps keep holding
            bucket = max(hist, key=lambda k: (hist[k], -k))
            pool = [i for i in majority
                    if kept[i].circuit.num_and_gates == bucket] or majority
        else:
            return kept
        kept.pop(pool[rng.randrange(len(pool))])


# ---------------------------------------------------------------------------
# Dataset builds

_WORKER: dict = {}


def _worker_init(pool_json: str, cfg: GenConfig, oracle_cfg: OracleConfig):
    _WORKER["pool"] = mine.pool_from_json(pool_json)
    _WORKER["cfg"] = cfg
    _WORKER["oracle"] = Oracle(oracle_cfg)


def _worker_generate(index: int) -> list[DatasetSample]:
    cfg = _WORKER["cfg"]
    try:
        return generate_sample(_WORKER["pool"], cfg, _WORKER["oracle"],
                               sample_rng(cfg.seed, index), index)
    except OracleError:
        return []  # hard oracle error: drop the attempt


def _iter_generated(pool: PatternPool, cfg: GenConfig,
                    oracle_cfg: OracleConfig, workers: int):
    budget = max(1, cfg.target_count) * cfg.attempt_factor
    if workers <= 1:
        _worker_init(mine.pool_to_json(pool), cfg, oracle_cfg)
        for index in range(budget):
            yield index, _worker_generate(index)
        return
    # sliding window of futures, consumed in submission order so the
    # accept/commit stage stays deterministic
    from collections import deque
    with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init,
            initargs=(mine.pool_to_json(pool), cfg, oracle_cfg)) as pool_exec:
        window = workers * 4
        pending = deque(pool_exec.submit(_worker_generate, i)
                        for i in range(min(window, budget)))
        next_index = len(pending)
        index = 0
        while pending:
            batch = pending.popleft().result()
            if next_index < budget:
                pending.append(pool_exec.submit(_worker_generate, next_index))
                next_index += 1
            yield index, batch
            index += 1


def split_dataset(samples: Sequence[DatasetSample], cfg: GenConfig,
                  rng: random.Random) -> dict[str, list[DatasetSample]]:
    order = list(samples)
    rng.shuffle(order)
    n = len(order)
    n_train = int(cfg.split_fractions[0] * n)
    n_val = int(cfg.split_fractions[1] * n)
    return {
        "train": order[:n_train],
        "val": order[n_train:n_train + n_val],
        "test": order[n_train + n_val:],
    }


def build_dataset(pool: PatternPool, cfg: GenConfig,
                  oracle_cfg: OracleConfig, out_dir: str | Path,
                  workers: int = 1) -> dict:
    """Generate, filter, rebalance, split, and write the dataset.

    Writes train/val/test JSONL files, a split manifest with line hashes,
    and a generation report; returns the report dictionary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    oracle_cfg = dataclasses.replace(oracle_cfg, timeout=cfg.oracle_timeout)

    filt = CircuitFilter(cfg)
    accepted: list[DatasetSample] = []
    attempts = 0
    generated = 0
    dropped_pair_partner = 0
    exhausted = False

    for _, batch in _iter_generated(pool, cfg, oracle_cfg, workers):
        attempts += 1
        generated += len(batch)
        admitted = []
        for s in batch:
            if len(accepted) + len(admitted) < cfg.target_count \
                    and filt.admit(s):
                admitted.append(s)
        if len(batch) == 2 and len(admitted) == 1:
            dropped_pair_partner += 1
        accepted.extend(admitted)
        if len(accepted) >= cfg.target_count:
            break
    else:
        exhausted = True

    pre_unreal = sum(1 for s in accepted
                     if s.status is RealizabilityStatus.UNREALIZABLE)
    pre_ratio = pre_unreal / len(accepted) if accepted else 0.0

    # the rebalancing pass only drops samples, so the final dataset is the
    # surviving balanced core of the generated one
    final = list(accepted)
    if cfg.rebalance:
        final = rebalance(final, cfg, sample_rng(cfg.seed, -1))

    splits = split_dataset(final, cfg, sample_rng(cfg.seed, -2))
    manifest: dict[str, list[str]] = {}
    for name in SPLIT_NAMES:
        lines = [s.to_json_line() for s in splits[name]]
        (out / f"{name}.jsonl").write_text(
            "".join(line + "\n" for line in lines))
        manifest[name] = [hashlib.sha256(line.encode()).hexdigest()
                          for line in lines]
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))

    post_unreal = sum(1 for s in final
                      if s.status is RealizabilityStatus.UNREALIZABLE)
    report = {
        "config": dataclasses.asdict(cfg),
        "oracle_mode": oracle_cfg.mode,
        "attempts": attempts,
        "generated": generated,
        "accepted": len(accepted),
        "final": len(final),
        "target_reached": len(accepted) >= cfg.target_count,
        "dropped_var_index": filt.dropped_var_index,
        "dropped_and_bucket": filt.dropped_bucket,
        "dropped_pair_partner": dropped_pair_partner,
        "dropped_rebalance": len(accepted) - len(final),
        "unrealizable_fraction_prebalance": pre_ratio,
        "unrealizable_count_final": post_unreal,
        "realizable_count_final": len(final) - post_unreal,
        "split_sizes": {k: len(v) for k, v in splits.items()},
    }
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True))
    return report


def load_split(path: str | Path) -> list[DatasetSample]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(DatasetSample.from_dict(json.loads(line)))
    return out


def load_dataset(directory: str | Path) -> dict[str, list[DatasetSample]]:
    return {name: load_split(Path(directory) / f"{name}.jsonl")
            for name in SPLIT_NAMES}

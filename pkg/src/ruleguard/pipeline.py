"""Experiment configuration, the staged pipeline, and run reports.

A run directory holds one artifact per stage; a stage whose artifact exists
is skipped, so interrupted runs resume where they stopped and finished
artifacts are never rewritten.

Stages and artifacts::

    train       qfunction.json (+ qfunction_extended.json)
    sample      experiences.npz, scheme.json
    explain     importance.csv
    mine        rules.jsonl
    generalize  relations.mr, generalized.jsonl
    evaluate    baseline.json, baseline_rewards.csv
    weakness    weakness.csv
    improve     composition.json
    report      summary.txt
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agent import Basis, Handicap, QFunction, TrainConfig, train_q
from .envs.base import Experience, sample_traces
from .envs.gridpellets import FEATURE_GROUPS, GridPellets, load_layout
from .envs.laneworld import LaneWorld, feature_index, mirror_spec_text, N_VEHICLES, PROPS
from .explainer import ImportanceTable, aggregate_importance
from .featurespace import DiscretizationScheme, build_decile_scheme, build_uniform_scheme
from .guided import EvalResult, evaluate_unguided
from .improve import greedy_compose, rule_feature_stats
from .metamorph import bundled_spec, generalize, parse_mr_spec
from .rulemine import MineParams, build_all_datasets, filter_rules, mine_rules
from .rules import Rule, dumps_jsonl, loads_jsonl
from .seeding import derive_seed
from .weakness import (MT, RR, RT, RTConfig, WeaknessReport, detect_weaknesses, read_reports_csv,
                       reports_csv, rr_baseline, rt_baseline)

log = logging.getLogger(__name__)

STAGES = ("train", "sample", "explain", "mine", "generalize", "evaluate", "weakness", "improve",
          "report")
ARTIFACTS = {
    "train": ["qfunction.json"],
    "sample": ["experiences.npz", "scheme.json"],
    "explain": ["importance.csv"],
    "mine": ["rules.jsonl"],
    "generalize": ["relations.mr", "generalized.jsonl"],
    "evaluate": ["baseline.json"],
    "weakness": ["weakness.csv"],
    "improve": ["composition.json"],
    "report": ["summary.txt"],
}

LANE_FEATURE_GROUPS = {
    "ego": list(range(len(PROPS))),
    "presence": [feature_index(k, "presence") for k in range(N_VEHICLES)],
    "lateral": [feature_index(k, p) for k in range(N_VEHICLES) for p in ("y", "vy", "sin_h")],
    "longitudinal": [feature_index(k, p) for k in range(N_VEHICLES) for p in ("x", "vx")],
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


class MissingArtifacts(FileNotFoundError):
    def __init__(self, names):
        super().__init__("missing artifacts: " + ", ".join(names))
        self.names = list(names)


# -- configuration ----------------------------------------------------------------

@dataclass
class EnvSection:
    kind: str = "grid"  # grid | lane
    layout: str = "tiny"
    max_steps: int | None = None
    ghost_noise: float = 0.2


@dataclass
class TrainSection:
    steps: int = 100_000
    learning_rate: float = 0.003
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    basis: str = "linear"
    tile_count: int = 4
    tile_resolution: int = 8
    extended: bool = False  # also train a 2x-steps baseline
    handicap: dict | None = None  # {action, feature?, low?, high?}


@dataclass
class SampleSection:
    n_rule: int = 600
    scheme: str = "decile"  # decile | uniform
    bins: int = 10


@dataclass
class ExplainSection:
    n_feat: int = 200
    n_samples: int = 500


@dataclass
class MineSection:
    min_accuracy: float = 0.9
    min_coverage: float = 0.01
    max_rules: int = 25


@dataclass
class MRSection:
    # "bundled:<name>", "auto:laneworld_mirror", or a path relative to the config file
    spec: str = "bundled:pacman_rotation"
    cap: int = 10_000


@dataclass
class EvaluateSection:
    n: int | None = None  # default 250 (grid) / 100 (lane)
    alpha: float = 0.05


@dataclass
class RTSection:
    enabled: bool = True
    k: int = 3
    runs: int = 100
    buckets: int = 100


@dataclass
class RRSection:
    enabled: bool = True
    sets: int | None = None  # default: one per mined rule


@dataclass
class ExperimentConfig:
    seed: int = 0
    output: str = "runs"
    env: EnvSection = field(default_factory=EnvSection)
    train: TrainSection = field(default_factory=TrainSection)
    sample: SampleSection = field(default_factory=SampleSection)
    explain: ExplainSection = field(default_factory=ExplainSection)
    mine: MineSection = field(default_factory=MineSection)
    mr: MRSection = field(default_factory=MRSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    rt: RTSection = field(default_factory=RTSection)
    rr: RRSection = field(default_factory=RRSection)
    base_dir: str = "."  # directory relative paths are resolved against

    @property
    def eval_n(self) -> int:
        if self.evaluate.n is not None:
            return self.evaluate.n
        return 100 if self.env.kind == "lane" else 250

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        known = {f.name: f for f in dataclasses.fields(cls) if f.name != "base_dir"}
        kw = {}
        for key, value in data.items():
            f = known.get(key)
            if f is None:
                raise ConfigError(f"unknown config key {key!r}")
            if f.default_factory is dataclasses.MISSING:
                kw[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            proto = f.default_factory()
            bad = set(value) - {g.name for g in dataclasses.fields(proto)}
            if bad:
                raise ConfigError(f"unknown key(s) in [{key}]: {', '.join(sorted(bad))}")
            kw[key] = dataclasses.replace(proto, **value)
        cfg = cls(**kw, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.env.kind not in ("grid", "lane"):
            raise ConfigError(f"env.kind must be 'grid' or 'lane', got {self.env.kind!r}")
        if self.env.kind == "grid":
            try:
                load_layout(self._resolve(self.env.layout) if self.env.layout.endswith(".lay")
                            else self.env.layout)
            except (OSError, ValueError) as e:
                raise ConfigError(f"env.layout: {e}") from None
        for name in ("min_accuracy", "min_coverage"):
            v = getattr(self.mine, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"mine.{name} must lie in [0, 1]")
        if not 0.0 < self.evaluate.alpha < 1.0:
            raise ConfigError("evaluate.alpha must lie in (0, 1)")
        if self.sample.n_rule < 1 or self.eval_n < 2:
            raise ConfigError("sample.n_rule must be >= 1 and evaluate.n >= 2")
        if self.sample.scheme not in ("decile", "uniform"):
            raise ConfigError("sample.scheme must be 'decile' or 'uniform'")
        if self.explain.n_samples < 50:
            raise ConfigError("explain.n_samples must be >= 50")
        spec = self.mr.spec
        if spec.startswith("bundled:"):
            try:
                bundled_spec(spec.split(":", 1)[1])
            except (OSError, ValueError):
                raise ConfigError(f"no bundled MR spec {spec!r}") from None
        elif spec.startswith("auto:"):
            if spec != "auto:laneworld_mirror":
                raise ConfigError(f"unknown generated MR spec {spec!r}")
        elif not Path(self._resolve(spec)).is_file():
            raise ConfigError(f"MR spec file not found: {self._resolve(spec)}")
        RTConfig(self.rt.k, self.rt.runs, self.rt.buckets)

    def _resolve(self, path: str) -> str:
        p = Path(path)
        return str(p if p.is_absolute() else Path(self.base_dir) / p)

    def train_config(self, steps_factor: int = 1) -> TrainConfig:
        t = self.train
        basis = Basis("tiles" if t.basis == "tiles" else "linear", count=t.tile_count,
                      resolution=t.tile_resolution)
        return TrainConfig(steps=t.steps * steps_factor, learning_rate=t.learning_rate,
                           gamma=t.gamma, eps_start=t.eps_start, eps_end=t.eps_end,
                           eps_fraction=t.eps_fraction, seed=derive_seed(self.seed, "train"),
                           basis=basis, handicap=Handicap(**t.handicap) if t.handicap else None)

    def make_env(self):
        e = self.env
        if e.kind == "lane":
            return LaneWorld(**({"max_steps": e.max_steps} if e.max_steps else {}))
        layout = self._resolve(e.layout) if e.layout.endswith(".lay") else e.layout
        kw = {"ghost_noise": e.ghost_noise}
        if e.max_steps:
            kw["max_steps"] = e.max_steps
        return GridPellets(layout=layout, **kw)

    def feature_groups(self) -> dict[str, list[int]]:
        return LANE_FEATURE_GROUPS if self.env.kind == "lane" else FEATURE_GROUPS


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    """Read a TOML experiment config; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    if seed is not None:
        data["seed"] = seed
    return ExperimentConfig.from_dict(data, base_dir=str(path.parent))


def bundled_config(name: str = "smoke") -> str:
    from importlib import resources

    return resources.files("ruleguard.data").joinpath(f"{name}.toml").read_text()


# -- run directories ----------------------------------------------------------------

def new_run_dir(root) -> Path:
    """First unused ``run-NNN`` directory under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    k = 0
    while True:
        d = root / f"run-{k:03d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def _write_new(path: Path, text: str) -> None:
    """Create ``path``; an existing artifact is never overwritten."""
    with open(path, "x") as fh:
        fh.write(text)


class Pipeline:
    """Stage runner bound to one run directory."""

    def __init__(self, config: ExperimentConfig, run_dir, workers: int | None = None):
        self.cfg = config
        self.dir = Path(run_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.workers = workers or 1
        self.env = config.make_env()
        cfg_path = self.dir / "config.json"
        text = json.dumps(config.to_json(), sort_keys=True, indent=1)
        if cfg_path.exists():
            if json.loads(cfg_path.read_text()) != json.loads(text):
                raise StageError("setup", f"{self.dir} was created with a different configuration")
        else:
            _write_new(cfg_path, text)
        self._cache: dict = {}

    def path(self, name: str) -> Path:
        return self.dir / name

    def done(self, stage: str) -> bool:
        return all(self.path(a).exists() for a in ARTIFACTS[stage])

    def run(self, until: str = "report") -> Path:
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        for stage in STAGES[: STAGES.index(until) + 1]:
            if self.done(stage):
                log.info("%s: artifacts present, skipping", stage)
                continue
            log.info("%s: running", stage)
            try:
                getattr(self, "stage_" + stage)()
            except StageError:
                raise
            except Exception as e:  # noqa: BLE001 - tag and re-raise for the CLI
                raise StageError(stage, f"{type(e).__name__}: {e}") from e
        return self.dir

    # -- loaders ------------------------------------------------------------------
    def q(self) -> QFunction:
        if "q" not in self._cache:
            self._cache["q"] = QFunction.loads(self.path("qfunction.json").read_text(),
                                               self.env.schema.digest())
        return self._cache["q"]

    def experience(self) -> Experience:
        return Experience.load(self.path("experiences.npz"))

    def scheme(self) -> DiscretizationScheme:
        return DiscretizationScheme.loads(self.path("scheme.json").read_text())

    def rules(self) -> list[Rule]:
        return loads_jsonl(self.path("rules.jsonl").read_text())

    def mrs(self):
        return parse_mr_spec(self.path("relations.mr").read_text(), n_actions=self.env.n_actions,
                             scheme=self.scheme())

    def baseline(self) -> EvalResult:
        d = json.loads(self.path("baseline.json").read_text())
        return EvalResult(**d)

    # -- stages ----------------------------------------------------------------------
    def stage_train(self):
        q = train_q(self.env, self.cfg.train_config())
        if self.cfg.train.extended:
            qx = train_q(self.env, self.cfg.train_config(steps_factor=2))
            _write_new(self.path("qfunction_extended.json"), qx.dumps(self.env.schema.digest()))
        _write_new(self.path("qfunction.json"), q.dumps(self.env.schema.digest()))

    def stage_sample(self):
        _, E = sample_traces(self.env, self.q(), self.cfg.sample.n_rule,
                             derive_seed(self.cfg.seed, "sample"))
        if len(E) < 10:
            raise StageError("sample", f"only {len(E)} experiences; increase sample.n_rule")
        if self.cfg.sample.scheme == "decile":
            scheme = build_decile_scheme(E.states, self.env.schema)
        else:
            scheme = build_uniform_scheme(self.env.schema, E.states, self.cfg.sample.bins)
        with open(self.path("experiences.npz"), "xb") as fh:
            E.save(fh)
        _write_new(self.path("scheme.json"), scheme.dumps())

    def stage_explain(self):
        E = self.experience()
        n_feat = min(self.cfg.explain.n_feat, len(E))
        imp = aggregate_importance(self.q(), E, self.scheme(), n_feat, self.cfg.explain.n_samples,
                                   derive_seed(self.cfg.seed, "explain"))
        _write_new(self.path("importance.csv"), imp.to_csv())

    def stage_mine(self):
        E, scheme, q = self.experience(), self.scheme(), self.q()
        imp = ImportanceTable.from_csv(self.path("importance.csv").read_text())
        params = MineParams(seed=derive_seed(self.cfg.seed, "mine"), max_rules=self.cfg.mine.max_rules)
        ds = build_all_datasets(E, q, scheme, self.env.n_actions, params)
        mined = mine_rules(E, q, imp, scheme, params, ds)
        kept = filter_rules(mined, ds, self.cfg.mine.min_accuracy, self.cfg.mine.min_coverage)
        _write_new(self.path("rules.jsonl"), dumps_jsonl(kept))

    def stage_generalize(self):
        spec = self.cfg.mr.spec
        if spec.startswith("bundled:"):
            text = bundled_spec(spec.split(":", 1)[1])
        elif spec == "auto:laneworld_mirror":
            text = mirror_spec_text(self.scheme(), self.experience().states)
        else:
            text = Path(self.cfg._resolve(spec)).read_text()
        parse_mr_spec(text, n_actions=self.env.n_actions, scheme=self.scheme())
        _write_new(self.path("relations.mr"), text)
        mrs = self.mrs()
        lines = []
        for rule in self.rules():
            g = generalize(rule, mrs, self.cfg.mr.cap)
            for m in g.members:
                prov = dict(m.provenance)
                prov["origin"] = rule.rule_id
                prov["via"] = [list(e) for e in g.applied[m.key]]
                lines.append(m.with_meta(provenance=prov))
        _write_new(self.path("generalized.jsonl"), dumps_jsonl(lines))

    def stage_evaluate(self):
        res = evaluate_unguided(self.q(), self.cfg.eval_n, self.env,
                                derive_seed(self.cfg.seed, "evaluate"), self.workers)
        _write_new(self.path("baseline.json"), res.dumps())
        _write_new(self.path("baseline_rewards.csv"), res.rewards_csv())

    def _weakness_reports(self) -> list[WeaknessReport]:
        if "reports" in self._cache:
            return self._cache["reports"]
        q, scheme, rules, mrs = self.q(), self.scheme(), self.rules(), self.mrs()
        base = self.baseline()
        n, alpha = self.cfg.eval_n, self.cfg.evaluate.alpha
        seed = derive_seed(self.cfg.seed, "evaluate")
        reports = detect_weaknesses(q, rules, mrs, self.env, scheme, n, alpha, seed, base,
                                    self.workers, self.cfg.mr.cap)
        self._cache["mt"] = reports
        if self.cfg.rt.enabled:
            rt = RTConfig(self.cfg.rt.k, self.cfg.rt.runs, self.cfg.rt.buckets)
            reports = reports + rt_baseline(q, self.env, scheme, rt, n, alpha, seed, base, self.workers)
        if self.cfg.rr.enabled and rules:
            sizes = [r.members for r in self._cache["mt"]]
            n_sets = self.cfg.rr.sets if self.cfg.rr.sets is not None else len(rules)
            reports = reports + rr_baseline(q, self.env, scheme, rules, sizes, n_sets, n, alpha,
                                            seed, base, self.workers)
        self._cache["reports"] = reports
        return reports

    def stage_weakness(self):
        _write_new(self.path("weakness.csv"), reports_csv(self._weakness_reports()))

    def stage_improve(self):
        q, scheme, rules, mrs = self.q(), self.scheme(), self.rules(), self.mrs()
        if "mt" in self._cache:
            mt = self._cache["mt"]
        else:
            mt = self._reload_mt(rules, mrs)
        ext = self.path("qfunction_extended.json")
        qx = QFunction.loads(ext.read_text()) if ext.exists() else None
        comp = greedy_compose(q, rules, mrs, self.env, scheme, self.cfg.eval_n,
                              self.cfg.evaluate.alpha, derive_seed(self.cfg.seed, "evaluate"),
                              reports=mt, extended_q=qx, workers=self.workers)
        _write_new(self.path("composition.json"), comp.dumps())

    def _reload_mt(self, rules, mrs) -> list[WeaknessReport]:
        """Verdicts of the MT reports from weakness.csv, aligned with ``rules``."""
        rows = [r for r in read_reports_csv(self.path("weakness.csv").read_text())
                if r["method"] == MT]
        if len(rows) != len(rules):
            raise StageError("improve", "weakness.csv does not match rules.jsonl")
        base = self.baseline()
        out = []
        for rule, row in zip(rules, rows):
            members = generalize(rule, mrs, self.cfg.mr.cap).members
            g = EvalResult(float(row["guided_mean"]), float(row["guided_stderr"]), int(row["n"]), [])
            out.append(WeaknessReport(MT, row["label"], rule, len(members), g, base, float(row["t"]),
                                      float(row["df"]), float(row["p"]), float(row["alpha"]),
                                      bool(int(row["weakness"])), members))
        return out

    def stage_report(self):
        _write_new(self.path("summary.txt"), report(self.dir, self.cfg.feature_groups(),
                                                    self.env.schema.names))


# -- reporting ----------------------------------------------------------------------

REPORT_ARTIFACTS = ["rules.jsonl", "generalized.jsonl", "weakness.csv", "composition.json"]


def detection_table(rows: list[dict]) -> list[tuple[str, int, int, float]]:
    """(method, evaluations, detected, ratio) per method present in the CSV rows."""
    out = []
    for method in (MT, RT, RR):
        sel = [r for r in rows if r["method"] == method]
        if not sel:
            continue
        hits = sum(int(r["weakness"]) for r in sel)
        out.append((method, len(sel), hits, hits / len(sel)))
    return out


def report(run_dir, groups: dict | None = None, names: list[str] | None = None) -> str:
    run_dir = Path(run_dir)
    missing = [a for a in REPORT_ARTIFACTS if not (run_dir / a).exists()]
    if missing:
        raise MissingArtifacts(missing)
    rules = loads_jsonl((run_dir / "rules.jsonl").read_text())
    gen = loads_jsonl((run_dir / "generalized.jsonl").read_text())
    rows = read_reports_csv((run_dir / "weakness.csv").read_text())
    comp = json.loads((run_dir / "composition.json").read_text())
    by_id = {r.rule_id: r for r in rules}

    def txt(rule):
        return rule.text(names)

    lines = [f"Run {run_dir.name}", "", f"Mined rules after filtering: {len(rules)}",
             f"Generalized rules (all members): {len(gen)}", "",
             "Weakness detection", "method  evaluations  detected  ratio"]
    for method, n, hits, ratio in detection_table(rows):
        lines.append(f"{method:<6}  {n:>11}  {hits:>8}  {ratio:.3f}")
    lines += ["", "Policy improvement", "policy              mean       stderr"]
    for label, key in (("base", "unguided"), ("rule-guided", "final"), ("extended-training", "extended")):
        r = comp.get(key)
        if r:
            lines.append(f"{label:<18}  {r['mean']:>9.2f}  {r['stderr']:>9.2f}")
    lines.append(f"rule sets selected (RS): {len(comp['selected'])}")
    if groups and rules:
        lines += ["", "Feature groups in mined rules (fraction of rules)"]
        for g, ratio in rule_feature_stats(rules, groups).items():
            lines.append(f"{g:<14} {ratio:.3f}")
    lines += ["", "Weaknesses"]
    weak = [r for r in rows if r["method"] == MT and int(r["weakness"])]
    if not weak:
        lines.append("no weaknesses detected")
    for row in weak:
        origin = by_id.get(row["origin_id"])
        lines.append(f"- {txt(origin) if origin else row['origin']}")
        lines.append(f"  guided {float(row['guided_mean']):.2f} vs unguided "
                     f"{float(row['baseline_mean']):.2f}, p = {float(row['p']):.3g}")
        for m in gen:
            if m.provenance.get("origin") != row["origin_id"] or m.rule_id == row["origin_id"]:
                continue
            via = ", ".join(mr for _, mr in m.provenance.get("via", []))
            lines.append(f"    {txt(m)}    [via {via}]")
    return "\n".join(lines) + "\n"


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)

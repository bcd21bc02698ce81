"""Command-line front end: reproducible attack/defense experiment runs.

Subcommands: synth-data, train, attack-fs, attack-ps, defend, transfer,
evaluate, report.  Every run is driven by a declarative INI config
(section.key paths, documented below), takes --seed and --out overrides,
validates inputs before computing, writes outputs atomically, and drops a
manifest.json echoing the fully resolved configuration.  Outputs are
deterministic given the seed.  Set UAPKIT_LOG=debug|info|warning for log
verbosity.  On failure a machine-readable JSON error is printed to stderr
and the exit code is nonzero (2 for validation errors, 1 for runtime
errors).

Config key paths (defaults in parentheses):

  run.seed (0), run.out, run.name (run)
  dataset.kind = synthetic | files
    synthetic: dataset.n_features, dataset.n_benign, dataset.n_malware,
      dataset.n_goodware_indicative, dataset.n_malware_indicative (0),
      dataset.p_on_own (0.8), dataset.p_on_other (0.02),
      dataset.n_continuous (0), dataset.p_background (0.05), dataset.seed (run.seed)
    files: dataset.data, dataset.spec
  split.train (0.6), split.exploration (0.2), split.test (0.2),
    split.stratified (true), split.seed (run.seed)
  model.family = logistic_regression | linear_svm | mlp | gbdt
    model.layers (1024,512), model.dropout (0.2), model.epochs (10),
    model.batch_size (256), model.learning_rate (0.001), model.optimizer (adam),
    model.hinge_c (1.0), model.n_trees (100), model.max_leaves (31),
    model.shrinkage (0.1), model.path (for commands that load a model)
  attack.kind = feature_uap | feature_input_specific | greedy_uer |
    greedy_confidence | random_chains | gp
    attack.l0_max (20), attack.toolkit, attack.max_chain_len (10),
    attack.n_chains (1000), attack.population (20), attack.generations (30),
    attack.mutation_rate (0.1), attack.crossover_rate (0.6)
  defense.kind = feature_space | uap_problem_space | gbdt_stat_model
    defense.mix (mixed), defense.l0_budget (40), defense.last_n_epochs (3),
    defense.toolkit, defense.max_chain_len (10), defense.n_traces (100)
  evaluate.threshold (0.5), evaluate.fpr_levels (0.01), evaluate.mc_reps (1),
    evaluate.perturbation, evaluate.toolkit
  transfer.models (comma-separated model files), transfer.l0_max (40)
  report.runs (comma-separated run directories)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from configparser import ConfigParser
from pathlib import Path

import numpy as np

from . import attacks, defenses, metrics, problem_space
from .data import (
    SplitPlan,
    SyntheticDatasetConfig,
    load_feature_spec,
    load_sparse_dataset,
    make_split,
    save_feature_spec,
    save_sparse_dataset,
    synthesize_dataset,
)
from .models import (
    TrainConfig,
    load_model,
    save_model,
    train_gbdt,
    train_linear_svm,
    train_logistic_regression,
    train_mlp,
)

log = logging.getLogger("uapkit")


class ConfigError(ValueError):
    """Invalid or missing configuration; exits with code 2."""


# ---------------------------------------------------------------------------
# config plumbing


def load_config(path) -> dict:
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = ConfigParser()
    parser.read(path)
    return {s: dict(parser.items(s)) for s in parser.sections()}


def apply_overrides(cfg: dict, seed, out, sets) -> dict:
    cfg = {s: dict(kv) for s, kv in cfg.items()}
    cfg.setdefault("run", {})
    if seed is not None:
        cfg["run"]["seed"] = str(seed)
    if out is not None:
        cfg["run"]["out"] = str(out)
    for item in sets or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key_path, value = item.split("=", 1)
        section, key = key_path.split(".", 1)
        cfg.setdefault(section, {})[key] = value
    return cfg


def _get(cfg, section, key, default=None, required=False):
    value = cfg.get(section, {}).get(key, default)
    if required and value is None:
        raise ConfigError(f"missing config key {section}.{key}")
    return value


def _get_int(cfg, section, key, default=None, required=False):
    v = _get(cfg, section, key, default, required)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{section}.{key} must be an integer, got {v!r}") from None


def _get_float(cfg, section, key, default=None, required=False):
    v = _get(cfg, section, key, default, required)
    if v is None:
        return None
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{section}.{key} must be a number, got {v!r}") from None


def _get_bool(cfg, section, key, default="true"):
    v = str(_get(cfg, section, key, default)).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{section}.{key} must be a boolean, got {v!r}")


def atomic_write_text(path, text: str) -> None:
    """Write to a temp file in the target directory and rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


class RunContext:
    """Resolved run inputs plus the output directory and manifest accumulator."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.seed = _get_int(cfg, "run", "seed", "0")
        out = _get(cfg, "run", "out", required=True)
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.name = _get(cfg, "run", "name", "run")
        self.outputs: list[str] = []
        self.extra: dict = {}

    def emit(self, filename: str, writer) -> Path:
        """writer(tmp_path) produces the file; it is then moved into place."""
        path = self.out / filename
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=filename + ".", suffix=".tmp")
        os.close(fd)
        try:
            writer(tmp)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.outputs.append(filename)
        return path

    def emit_json(self, filename: str, obj) -> Path:
        path = self.out / filename
        atomic_write_json(path, obj)
        self.outputs.append(filename)
        return path

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config": self.cfg,
            "seed": self.seed,
            "outputs": sorted(self.outputs),
            "extra": self.extra,
        }
        atomic_write_json(self.out / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# shared loaders


def _dataset_from_config(ctx: RunContext):
    cfg = ctx.cfg
    kind = _get(cfg, "dataset", "kind", "synthetic")
    if kind == "synthetic":
        scfg = SyntheticDatasetConfig(
            n_features=_get_int(cfg, "dataset", "n_features", required=True),
            n_benign=_get_int(cfg, "dataset", "n_benign", required=True),
            n_malware=_get_int(cfg, "dataset", "n_malware", required=True),
            n_goodware_indicative=_get_int(cfg, "dataset", "n_goodware_indicative", required=True),
            n_malware_indicative=_get_int(cfg, "dataset", "n_malware_indicative", "0"),
            p_on_in_own_class=_get_float(cfg, "dataset", "p_on_own", "0.8"),
            p_on_in_other_class=_get_float(cfg, "dataset", "p_on_other", "0.02"),
            n_continuous=_get_int(cfg, "dataset", "n_continuous", "0"),
            p_background=_get_float(cfg, "dataset", "p_background", "0.05"),
            seed=_get_int(cfg, "dataset", "seed", str(ctx.seed)),
        )
        return synthesize_dataset(scfg)
    if kind == "files":
        spec_path = _get(cfg, "dataset", "spec", required=True)
        data_path = _get(cfg, "dataset", "data", required=True)
        for p in (spec_path, data_path):
            if not Path(p).is_file():
                raise ConfigError(f"dataset file not found: {p}")
        spec = load_feature_spec(spec_path)
        return load_sparse_dataset(data_path, spec)
    raise ConfigError(f"dataset.kind must be synthetic or files, got {kind!r}")


def _split_from_config(ctx: RunContext, dataset):
    cfg = ctx.cfg
    plan = SplitPlan(
        train_fraction=_get_float(cfg, "split", "train", "0.6"),
        exploration_fraction=_get_float(cfg, "split", "exploration", "0.2"),
        test_fraction=_get_float(cfg, "split", "test", "0.2"),
        stratified=_get_bool(cfg, "split", "stratified", "true"),
        seed=_get_int(cfg, "split", "seed", str(ctx.seed)),
    )
    return make_split(dataset, plan)


def _train_cfg_from_config(ctx: RunContext) -> TrainConfig:
    cfg = ctx.cfg
    return TrainConfig(
        optimizer=_get(cfg, "model", "optimizer", "adam"),
        learning_rate=_get_float(cfg, "model", "learning_rate", "0.001"),
        epochs=_get_int(cfg, "model", "epochs", "10"),
        batch_size=_get_int(cfg, "model", "batch_size", "256"),
        seed=_get_int(cfg, "model", "seed", str(ctx.seed)),
        hinge_c=_get_float(cfg, "model", "hinge_c", "1.0"),
    )


def _layer_sizes_from_config(ctx: RunContext, n_features: int):
    layers = _get(ctx.cfg, "model", "layers", "1024,512")
    hidden = [int(t) for t in str(layers).split(",") if t.strip()]
    return (n_features, *hidden, 1)


def _train_model_from_config(ctx: RunContext, train_set):
    family = _get(ctx.cfg, "model", "family", required=True)
    tc = _train_cfg_from_config(ctx)
    if family == "logistic_regression":
        return train_logistic_regression(train_set, tc)
    if family == "linear_svm":
        return train_linear_svm(train_set, tc)
    if family == "mlp":
        return train_mlp(train_set, tc, _layer_sizes_from_config(ctx, train_set.spec.n_features),
                         dropout_rate=_get_float(ctx.cfg, "model", "dropout", "0.2"))
    if family == "gbdt":
        return train_gbdt(train_set,
                          n_trees=_get_int(ctx.cfg, "model", "n_trees", "100"),
                          max_leaves=_get_int(ctx.cfg, "model", "max_leaves", "31"),
                          shrinkage=_get_float(ctx.cfg, "model", "shrinkage", "0.1"))
    raise ConfigError(f"unknown model.family {family!r}")


def _load_model_from_config(ctx: RunContext):
    path = _get(ctx.cfg, "model", "path", required=True)
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    return load_model(path)


def _toolkit_from_config(ctx: RunContext, spec, section: str):
    path = _get(ctx.cfg, section, "toolkit", required=True)
    if not Path(path).is_file():
        raise ConfigError(f"toolkit file not found: {path}")
    return problem_space.load_toolkit(path, spec)


def _fpr_levels(ctx: RunContext):
    raw = _get(ctx.cfg, "evaluate", "fpr_levels", "0.01")
    return [float(t) for t in str(raw).split(",") if t.strip()]


def _clean_metrics(model, test_set, levels) -> dict:
    X = test_set.dense_matrix()
    scores = model.score_matrix(X)
    return {
        "auc_roc": metrics.auc_roc(scores, test_set.labels),
        "tpr_at_fpr": {str(l): metrics.tpr_at_fpr(scores, test_set.labels, l) for l in levels},
    }


def _uer_lengths_report(model, toolkit, chain, test_malware, threshold, seed, lengths=(1, 4, 10)):
    X = test_malware.dense_matrix()
    tp_rows = np.nonzero(model.score_matrix(X) >= threshold)[0]
    if len(tp_rows) == 0:
        raise ConfigError("model has no true positives on the test set")
    tp = test_malware.subset(tp_rows)
    out = {}
    for ln in lengths:
        prefix = problem_space.TransformationChain(chain.ids[: min(ln, len(chain))],
                                                   max(len(chain.ids), ln))
        rep = metrics.uer(model, tp, prefix, threshold=threshold, rng=seed, toolkit=toolkit)
        out[str(ln)] = rep.uer
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth_data(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    ctx.emit("dataset.txt", lambda tmp: save_sparse_dataset(dataset, tmp))
    ctx.emit("dataset.spec", lambda tmp: save_feature_spec(dataset.spec, tmp))
    ctx.extra["n_examples"] = len(dataset)
    ctx.extra["n_malware"] = int(np.sum(dataset.labels == 1))


def cmd_train(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    train_set, _, test_set = _split_from_config(ctx, dataset)
    model = _train_model_from_config(ctx, train_set)
    ctx.emit("model.model", lambda tmp: save_model(model, tmp))
    report = {"name": ctx.name, **_clean_metrics(model, test_set, _fpr_levels(ctx))}
    ctx.emit_json("report.json", report)
    ctx.extra["n_train"] = len(train_set)


def cmd_attack_fs(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    _, exploration, test_set = _split_from_config(ctx, dataset)
    model = _load_model_from_config(ctx)
    kind = _get(ctx.cfg, "attack", "kind", "feature_uap")
    budget = attacks.AttackBudget(_get_int(ctx.cfg, "attack", "l0_max", "20"))
    threshold = _get_float(ctx.cfg, "evaluate", "threshold", "0.5")
    expl_mal = exploration.malware_only()
    test_mal = test_set.malware_only()
    if kind == "feature_uap":
        if hasattr(model, "weights") and not hasattr(model, "layer_sizes"):
            uap = attacks.craft_uap_linear(model, dataset.spec, budget)
        else:
            uap = attacks.craft_uap_avg_jacobian(model, expl_mal, budget)
        rep = attacks.transfer_eval(uap, model, test_mal, threshold)
        ctx.emit("uap.txt", lambda tmp: attacks.save_uap(uap, tmp))
        ctx.emit("report.json", lambda tmp: metrics.write_report_json(rep, tmp))
        ctx.extra["uer"] = rep.uer
    elif kind == "feature_input_specific":
        X = test_mal.dense_matrix()
        tp_rows = np.nonzero(model.score_matrix(X) >= threshold)[0]
        if len(tp_rows) == 0:
            raise ConfigError("model has no true positives on the test set")
        evaded = 0
        for i in tp_rows:
            adv = attacks.input_specific_attack(model, test_mal.examples[i], budget, threshold)
            evaded += int(model.score_matrix(adv.to_dense()[None, :])[0] < threshold)
        rep = metrics.EvaluationReport(evaded / len(tp_rows), evaded, len(tp_rows))
        ctx.emit("report.json", lambda tmp: metrics.write_report_json(rep, tmp))
        ctx.extra["uer"] = rep.uer
    else:
        raise ConfigError(f"attack.kind {kind!r} is not a feature-space attack")


def cmd_attack_ps(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    _, exploration, test_set = _split_from_config(ctx, dataset)
    model = _load_model_from_config(ctx)
    toolkit = _toolkit_from_config(ctx, dataset.spec, "attack")
    kind = _get(ctx.cfg, "attack", "kind", "greedy_uer")
    threshold = _get_float(ctx.cfg, "evaluate", "threshold", "0.5")
    max_len = _get_int(ctx.cfg, "attack", "max_chain_len", "10")
    expl_mal = exploration.malware_only()
    test_mal = test_set.malware_only()
    ctx.extra["search_rounds"] = problem_space.search_rounds_estimate(
        len(expl_mal), max_len, len(toolkit))
    if kind == "greedy_uer":
        chain, trace = problem_space.greedy_uap_search_uer(
            model, toolkit, expl_mal, threshold, max_len=max_len, rng=ctx.seed)
        ctx.extra["exploration_uer_trace"] = trace
    elif kind == "greedy_confidence":
        chain, trace = problem_space.greedy_uap_search_confidence(
            model, toolkit, expl_mal, max_len=max_len, rng=ctx.seed)
        ctx.extra["exploration_score_trace"] = trace
    elif kind == "random_chains":
        rc = problem_space.random_chain_attack(
            model, toolkit, test_mal, n_chains=_get_int(ctx.cfg, "attack", "n_chains", "1000"),
            max_len=max_len, threshold=threshold, rng=ctx.seed)
        ctx.emit("uer_matrix.csv", lambda tmp: metrics.write_matrix_csv(
            rc.uer_matrix, [f"chain{k}" for k in range(len(rc.chains))],
            [f"len{k+1}" for k in range(max_len)], tmp, corner="chain"))
        ctx.emit_json("median_per_length.json",
                      {str(k + 1): float(v) for k, v in enumerate(rc.median_per_length)})
        best = int(np.argmax(rc.uer_matrix[:, -1]))
        chain = rc.chains[best]
    elif kind == "gp":
        result = problem_space.gp_uap_search(
            model, toolkit, expl_mal,
            population=_get_int(ctx.cfg, "attack", "population", "20"),
            generations=_get_int(ctx.cfg, "attack", "generations", "30"),
            mutation_rate=_get_float(ctx.cfg, "attack", "mutation_rate", "0.1"),
            crossover_rate=_get_float(ctx.cfg, "attack", "crossover_rate", "0.6"),
            max_len=max_len, rng=ctx.seed)
        chain = result.best_chain
        ctx.extra["gp_best_fitness"] = result.best_fitness
        ctx.extra["gp_max_run_length"] = result.max_run_length
        ctx.extra["gp_fitness_trace"] = list(result.fitness_trace)
    else:
        raise ConfigError(f"attack.kind {kind!r} is not a problem-space attack")
    ctx.emit("chain.txt", lambda tmp: problem_space.save_chain(chain, tmp))
    uer_by_length = _uer_lengths_report(model, toolkit, chain, test_mal, threshold, ctx.seed)
    report = {"name": ctx.name, "chain": list(chain.ids), "uer_by_length": uer_by_length}
    ctx.emit_json("report.json", report)


def cmd_defend(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    train_set, exploration, test_set = _split_from_config(ctx, dataset)
    kind = _get(ctx.cfg, "defense", "kind", required=True)
    mix = _get(ctx.cfg, "defense", "mix", "mixed")
    threshold = _get_float(ctx.cfg, "evaluate", "threshold", "0.5")
    tc = _train_cfg_from_config(ctx)
    family = _get(ctx.cfg, "model", "family", required=True)
    report = {"name": ctx.name}
    if kind == "feature_space":
        dcfg = defenses.FeatureSpaceDefenseConfig(
            l0_budget=_get_int(ctx.cfg, "defense", "l0_budget", "40"), mix=mix)
        model = defenses.adv_train_feature_space(
            family, train_set, dcfg, tc,
            layer_sizes=_layer_sizes_from_config(ctx, dataset.spec.n_features),
            dropout_rate=_get_float(ctx.cfg, "model", "dropout", "0.2"),
            threshold=threshold)
    elif kind == "uap_problem_space":
        toolkit = _toolkit_from_config(ctx, dataset.spec, "defense")
        dcfg = defenses.UapAdvTrainingConfig(
            last_n_epochs=_get_int(ctx.cfg, "defense", "last_n_epochs", "3"), mix=mix,
            max_chain_len=_get_int(ctx.cfg, "defense", "max_chain_len", "10"))
        model = defenses.adv_train_uap_problem_space(
            train_set, toolkit, dcfg, tc,
            layer_sizes=_layer_sizes_from_config(ctx, dataset.spec.n_features),
            dropout_rate=_get_float(ctx.cfg, "model", "dropout", "0.2"),
            model_family=family, threshold=threshold)
        adaptive = defenses.adaptive_attack_eval(
            model, toolkit, exploration.malware_only(), test_set.malware_only(),
            threshold=threshold, max_len=dcfg.max_chain_len, rng=ctx.seed + 1)
        report["uer_by_length"] = {str(k): v for k, v in adaptive["uer_by_length"].items()}
    elif kind == "gbdt_stat_model":
        toolkit = _toolkit_from_config(ctx, dataset.spec, "defense")
        n_traces = _get_int(ctx.cfg, "defense", "n_traces", "100")
        undefended = train_gbdt(train_set,
                                n_trees=_get_int(ctx.cfg, "model", "n_trees", "100"),
                                max_leaves=_get_int(ctx.cfg, "model", "max_leaves", "31"))
        expl_mal = exploration.malware_only()
        chain, _ = problem_space.greedy_uap_search_confidence(
            undefended, toolkit, expl_mal,
            max_len=_get_int(ctx.cfg, "defense", "max_chain_len", "10"), rng=ctx.seed)
        take = min(n_traces, len(expl_mal))
        clean_vecs = list(expl_mal.examples[:take])
        outcomes = [problem_space.apply_chain(x, chain, toolkit,
                                              problem_space._seed_rng(ctx.seed, 8, k))
                    for k, x in enumerate(clean_vecs)]
        stat = fit = defenses.fit_perturbation_stat_model(clean_vecs, outcomes)
        model = defenses.adv_train_gbdt_with_stat_model(
            train_set, stat, mix=mix, seed=ctx.seed,
            n_trees=_get_int(ctx.cfg, "model", "n_trees", "100"),
            max_leaves=_get_int(ctx.cfg, "model", "max_leaves", "31"))
        ctx.emit("perturbation_stats.txt", lambda tmp: defenses.save_stat_model(fit, tmp))
        ctx.extra["chain"] = list(chain.ids)
    else:
        raise ConfigError(f"unknown defense.kind {kind!r}")
    ctx.emit("model.model", lambda tmp: save_model(model, tmp))
    report.update(_clean_metrics(model, test_set, _fpr_levels(ctx)))
    ctx.emit_json("report.json", report)


def cmd_transfer(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    _, exploration, test_set = _split_from_config(ctx, dataset)
    raw = _get(ctx.cfg, "transfer", "models", required=True)
    paths = [p.strip() for p in raw.split(",") if p.strip()]
    if len(paths) < 2:
        raise ConfigError("transfer.models needs at least two model files")
    for p in paths:
        if not Path(p).is_file():
            raise ConfigError(f"model file not found: {p}")
    names, models = [], []
    for p in paths:
        base = name = Path(p).stem
        k = 2
        while name in names:  # two runs often both call their file model.model
            name, k = f"{base}_{k}", k + 1
        names.append(name)
        models.append(load_model(p))
    budget = attacks.AttackBudget(_get_int(ctx.cfg, "transfer", "l0_max", "40"))
    threshold = _get_float(ctx.cfg, "evaluate", "threshold", "0.5")
    expl_mal = exploration.malware_only()
    test_mal = test_set.malware_only()
    matrix = np.zeros((len(names), len(names)))
    for i, m in enumerate(models):
        if hasattr(m, "weights") and not hasattr(m, "layer_sizes"):
            uap = attacks.craft_uap_linear(m, dataset.spec, budget)
        else:
            uap = attacks.craft_uap_avg_jacobian(m, expl_mal, budget)
        for j, dst in enumerate(models):
            matrix[i, j] = attacks.transfer_eval(uap, dst, test_mal, threshold).uer
    ctx.emit("transfer_matrix.csv", lambda tmp: metrics.write_matrix_csv(
        matrix, names, names, tmp, corner="source\\target"))
    ctx.extra["models"] = names


def cmd_evaluate(ctx: RunContext) -> None:
    dataset = _dataset_from_config(ctx)
    _, _, test_set = _split_from_config(ctx, dataset)
    model = _load_model_from_config(ctx)
    threshold = _get_float(ctx.cfg, "evaluate", "threshold", "0.5")
    levels = _fpr_levels(ctx)
    report = {"name": ctx.name, **_clean_metrics(model, test_set, levels)}
    pert_path = _get(ctx.cfg, "evaluate", "perturbation")
    if pert_path is not None:
        if not Path(pert_path).is_file():
            raise ConfigError(f"perturbation file not found: {pert_path}")
        with open(pert_path, "r", encoding="utf-8") as f:
            first = f.readline()
        test_mal = test_set.malware_only()
        X = test_mal.dense_matrix()
        tp_rows = np.nonzero(model.score_matrix(X) >= threshold)[0]
        if len(tp_rows) == 0:
            raise ConfigError("model has no true positives on the test set")
        tp = test_mal.subset(tp_rows)
        if first.startswith("uap v1:"):
            uap = attacks.load_uap(pert_path, dataset.spec)
            rep = metrics.uer(model, tp, uap, threshold=threshold,
                              mc_reps=_get_int(ctx.cfg, "evaluate", "mc_reps", "1"))
            report["uer"] = rep.uer
        elif first.startswith("chain v1:"):
            toolkit = _toolkit_from_config(ctx, dataset.spec, "evaluate")
            chain = problem_space.load_chain(pert_path)
            report["uer_by_length"] = _uer_lengths_report(
                model, toolkit, chain, test_mal, threshold, ctx.seed)
            rep = metrics.uer(model, tp, chain, threshold=threshold, rng=ctx.seed,
                              toolkit=toolkit,
                              mc_reps=_get_int(ctx.cfg, "evaluate", "mc_reps", "1"))
            report["uer"] = rep.uer
        else:
            raise ConfigError(f"unrecognized perturbation file format: {pert_path}")
    ctx.emit_json("report.json", report)


def cmd_report(ctx: RunContext) -> None:
    raw = _get(ctx.cfg, "report", "runs", required=True)
    run_dirs = [p.strip() for p in raw.split(",") if p.strip()]
    rows = []
    bundle = {}
    for d in run_dirs:
        rp = Path(d) / "report.json"
        if not rp.is_file():
            raise ConfigError(f"no report.json under {d}")
        with open(rp, "r", encoding="utf-8") as f:
            rep = json.load(f)
        bundle[d] = rep
        uer_by_length = rep.get("uer_by_length", {})
        tpr = rep.get("tpr_at_fpr", {})
        rows.append({
            "name": rep.get("name", Path(d).name),
            "auc_roc": rep.get("auc_roc", ""),
            "tpr_at_fpr": next(iter(tpr.values()), "") if tpr else "",
            "uer_1": uer_by_length.get("1", ""),
            "uer_4": uer_by_length.get("4", ""),
            "uer_10": uer_by_length.get("10", ""),
        })
    ctx.emit("summary.csv", lambda tmp: metrics.write_summary_csv(rows, tmp))
    ctx.emit_json("summary.json", bundle)


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "attack-fs": cmd_attack_fs,
    "attack-ps": cmd_attack_ps,
    "defend": cmd_defend,
    "transfer": cmd_transfer,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uapkit",
        description="Universal adversarial perturbation experiments: attacks, defenses, reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override run.out directory")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config key")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("UAPKIT_LOG", "warning").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args.seed, args.out, args.set)
        ctx = RunContext(args.command, cfg)
        log.info("running %s into %s (seed %d)", args.command, ctx.out, ctx.seed)
        COMMANDS[args.command](ctx)
        ctx.finish()
        return 0
    except ConfigError as e:
        json.dump({"error": "config", "detail": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (ValueError, OSError, KeyError) as e:
        json.dump({"error": type(e).__name__, "detail": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

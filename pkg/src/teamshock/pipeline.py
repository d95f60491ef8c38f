"""End-to-end orchestration: ingest -> aggregate/forecast -> select ->
features -> train/tune -> predict -> effects -> regress -> report.

Every stage writes its outputs under the configured output directory and
registers them in a manifest of SHA-256 digests, so two runs with the same
config and seed are byte-identical and verifiable.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import cohort, effects, heterogeneity, models, report, timeseries
from .base import derive_seed
from .events import ScanReport, load_events_frame, load_languages, load_profiles

PIPELINE_VERSION = "0.1.0"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


DEFAULT_GBDT = {"n_trees": 150, "learning_rate": 0.1, "max_depth": 3,
                "min_samples_leaf": 5}
DEFAULT_RF = {"n_trees": 100, "max_depth": 8, "min_samples_leaf": 5,
              "max_features": "sqrt"}
#: Default hyperparameter search space; override via config. An empty list
#: disables tuning and uses gbdt_params as-is.
DEFAULT_GRID = [
    {"n_trees": 100, "learning_rate": 0.1, "max_depth": 3, "min_samples_leaf": 5},
    {"n_trees": 300, "learning_rate": 0.05, "max_depth": 5, "min_samples_leaf": 20},
]


@dataclass
class PipelineConfig:
    events_path: str
    profiles_path: str
    languages_path: str
    out_dir: str
    reference_year: int = 2018
    target_year: int = 2019
    shock_month: int = 1
    months_of_interest: tuple = (1, 2, 3, 4, 5, 6)
    outcomes: tuple = ("productivity", "team_size")
    alpha: float = 0.05
    bootstrap_iterations: int = 1000
    min_active_members: int = 3
    test_fraction: float = 0.2
    cluster_threshold: float = 0.7
    forecast_horizon: int = 12
    metrics: tuple = ("active_repos", "opened_pull_requests",
                      "pushes_per_repo", "active_members_per_repo")
    gbdt_params: dict = field(default_factory=lambda: dict(DEFAULT_GBDT))
    rf_params: dict = field(default_factory=lambda: dict(DEFAULT_RF))
    tuning_grid: list = field(default_factory=list)
    tune_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        self.months_of_interest = tuple(self.months_of_interest)
        self.outcomes = tuple(self.outcomes)
        self.metrics = tuple(self.metrics)
        if self.target_year <= self.reference_year:
            raise ConfigError("target_year must exceed reference_year")
        if not set(self.months_of_interest) <= set(range(1, 13)):
            raise ConfigError("months_of_interest must be within 1..12")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.bootstrap_iterations < 1:
            raise ConfigError("bootstrap_iterations must be >= 1")

    @property
    def shock_year(self) -> int:
        return self.target_year + 1

    @classmethod
    def from_file(cls, path, overrides=None):
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a key-value mapping")
        if overrides:
            data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return asdict(self)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class PipelineRun:
    """Holds intermediate state across stages of one pipeline execution."""

    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.out = Path(config.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "version": PIPELINE_VERSION,
            "seed": config.seed,
            "config": config.to_dict(),
            "inputs": {},
            "stages": {},
            "warnings": [],
        }

    # -- helpers ------------------------------------------------------------

    def _register(self, stage, *paths):
        entry = self.manifest["stages"].setdefault(stage, {"outputs": {}})
        for path in paths:
            rel = str(Path(path).relative_to(self.out))
            entry["outputs"][rel] = _sha256(path)

    def _write_csv(self, df, path, index=False):
        df.to_csv(path, index=index, float_format="%.10g")
        return path

    # -- stages -------------------------------------------------------------

    def ingest(self):
        cfg = self.cfg
        for key in ("events_path", "profiles_path", "languages_path"):
            p = Path(getattr(cfg, key))
            if not p.exists():
                raise ConfigError(f"{key} does not exist: {p}")
            self.manifest["inputs"][key] = {"path": str(p), "sha256": _sha256(p)}
        scan = ScanReport()
        self.events = load_events_frame(cfg.events_path, report=scan)
        self.events = cohort.prepare_events(self.events)
        self.profiles = load_profiles(cfg.profiles_path)
        self.languages = load_languages(cfg.languages_path)
        scan_path = self.out / "scan_report.json"
        with open(scan_path, "w", encoding="utf-8") as fh:
            json.dump({"total": scan.total, "parsed": scan.parsed,
                       "skipped": scan.skipped,
                       "unknown_type": scan.unknown_type,
                       "errors": scan.errors}, fh, indent=2, sort_keys=True)
        self._register("ingest", scan_path)

    def aggregate_forecast(self):
        cfg = self.cfg
        boundary = cfg.shock_year * 12  # first month index of the shock year
        paths = []
        for metric in cfg.metrics:
            series = timeseries.aggregate_monthly(self.events, metric)
            cut = boundary - series.start_month
            if cut < 24:
                self.manifest["warnings"].append(
                    f"metric {metric}: only {cut} pre-shock months; "
                    "skipping forecast")
                continue
            history = timeseries.MonthlySeries(metric, series.start_month,
                                               series.values[:cut])
            forecast = timeseries.forecast_with_intervals(
                history, horizon=cfg.forecast_horizon)
            n_obs = min(cfg.forecast_horizon, len(series.values) - cut)
            observed = series.values[cut:cut + n_obs]
            trimmed = timeseries.Forecast(
                start_month=forecast.start_month,
                point=forecast.point[:n_obs],
                intervals={lvl: (lo[:n_obs], hi[:n_obs])
                           for lvl, (lo, hi) in forecast.intervals.items()},
                levels=forecast.levels)
            gap = timeseries.overall_effect(observed, trimmed, metric=metric)
            gap_path = self.out / f"gap_{metric}.csv"
            gap.to_csv(gap_path)
            svg_path = self.out / f"forecast_{metric}.svg"
            report.plot_forecast(history.values, forecast, svg_path,
                                 title=metric)
            paths += [gap_path, svg_path]
        if paths:
            self._register("aggregate_forecast", *paths)
        else:
            self.manifest["stages"]["aggregate_forecast"] = {"outputs": {}}

    def select(self):
        cfg = self.cfg
        self.reference_repos = cohort.select_teams(
            self.events, cohort.SelectionCriteria(
                cfg.reference_year, cfg.min_active_members))
        self.target_repos = cohort.select_teams(
            self.events, cohort.SelectionCriteria(
                cfg.target_year, cfg.min_active_members))
        if not self.reference_repos or not self.target_repos:
            raise ValueError("selection produced an empty reference or target set")
        paths = []
        for name, repos in (("reference", self.reference_repos),
                            ("target", self.target_repos)):
            path = self.out / f"{name}_repos.txt"
            path.write_text("\n".join(repos) + "\n", encoding="utf-8")
            paths.append(path)
        self._register("select", *paths)

    def features(self):
        cfg = self.cfg
        extractor = cohort.FeatureExtractor(self.events, self.profiles,
                                            self.languages)
        X_ref = extractor.extract_matrix(self.reference_repos,
                                         cfg.reference_year)
        X_tgt = extractor.extract_matrix(self.target_repos, cfg.target_year)
        self.X_ref, n_drop_ref = cohort.drop_incomplete(X_ref)
        self.X_tgt, n_drop_tgt = cohort.drop_incomplete(X_tgt)
        self.manifest["stages"].setdefault("features", {"outputs": {}})
        self.manifest["stages"]["features"]["dropped_incomplete"] = {
            "reference": n_drop_ref, "target": n_drop_tgt}
        if self.X_ref.empty or self.X_tgt.empty:
            raise ValueError("all rows dropped for missing features")

        months = cfg.months_of_interest
        self.Y_ref, self.Y_prior, self.Y_obs = {}, {}, {}
        for outcome in cfg.outcomes:
            self.Y_ref[outcome] = cohort.monthly_outcomes(
                self.events, list(self.X_ref.index), cfg.reference_year + 1,
                months, outcome)
            self.Y_prior[outcome] = cohort.monthly_outcomes(
                self.events, list(self.X_ref.index), cfg.reference_year,
                months, outcome)
            self.Y_obs[outcome] = cohort.monthly_outcomes(
                self.events, list(self.X_tgt.index), cfg.shock_year,
                months, outcome)

        paths = []
        for name, df in (("features_reference", self.X_ref),
                         ("features_target", self.X_tgt)):
            path = self.out / f"{name}.csv"
            self._write_csv(df, path, index=True)
            paths.append(path)
        schema_path = self.out / "feature_schema.json"
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump({"features": list(cohort.FEATURE_REGISTRY),
                       "notes": "counts with _log1p suffix are stored "
                                "log1p-transformed; tenures in days; "
                                "entropies natural-log"},
                      fh, indent=2, sort_keys=True)
        paths.append(schema_path)
        self._register("features", *paths)

    def train(self):
        cfg = self.cfg
        n_ref = len(self.X_ref)
        train_idx, test_idx = models.train_test_split_indices(
            n_ref, cfg.test_fraction, seed=derive_seed(cfg.seed, "split"))
        self.test_repos = list(self.X_ref.index[test_idx])
        X = self.X_ref.to_numpy(dtype=float)
        self.models = {}
        self.test_residuals = {}
        eval_reports = []
        paths = []
        model_dir = self.out / "models"
        model_dir.mkdir(exist_ok=True)
        for outcome in cfg.outcomes:
            for month in cfg.months_of_interest:
                y = (self.Y_ref[outcome][month]
                     .reindex(self.X_ref.index).to_numpy(dtype=float))
                gbdt_params = dict(cfg.gbdt_params)
                if cfg.tuning_grid:
                    gbdt_params, _ = models.kfold_tune(
                        X[train_idx], y[train_idx], list(cfg.tuning_grid),
                        lambda p: models.GradientBoostedTrees(**p),
                        k=cfg.tune_folds,
                        seed=derive_seed(cfg.seed, "tune", outcome, month))
                gbdt = models.GradientBoostedTrees(**gbdt_params)
                gbdt.fit(self.X_ref.iloc[train_idx], y[train_idx])
                rf = models.RandomForest(
                    random_state=derive_seed(cfg.seed, "rf", outcome, month),
                    **cfg.rf_params)
                rf.fit(self.X_ref.iloc[train_idx], y[train_idx])

                y_test = y[test_idx]
                gbdt_pred = gbdt.predict(self.X_ref.iloc[test_idx])
                rf_pred = rf.predict(self.X_ref.iloc[test_idx])
                prior = (self.Y_prior[outcome][month]
                         .reindex(self.X_ref.index).to_numpy(dtype=float))
                naive_pred, _ = models.seasonal_naive_predict(prior[test_idx])
                eval_reports.append(models.evaluate(
                    y_test, gbdt_pred, "gbdt", outcome, month))
                eval_reports.append(models.evaluate(
                    y_test, rf_pred, "rf", outcome, month))
                eval_reports.append(models.evaluate(
                    y_test, naive_pred, "baseline", outcome, month))

                self.models[(outcome, month)] = gbdt
                self.test_residuals[(outcome, month)] = y_test - gbdt_pred
                for tag, model in (("gbdt", gbdt), ("rf", rf)):
                    mpath = model_dir / f"{outcome}_m{month}_{tag}.json"
                    models.save_model(model, mpath)
                    paths.append(mpath)

        self.eval_reports = eval_reports
        eval_path = self.out / "eval_reports.csv"
        self._write_csv(report.eval_table(eval_reports), eval_path)
        paths.append(eval_path)
        resid_rows = []
        for (outcome, month), resid in sorted(self.test_residuals.items()):
            for repo, r in zip(self.test_repos, resid):
                resid_rows.append({"outcome": outcome, "month": month,
                                   "repo": repo, "residual": r})
        resid_path = self.out / "test_residuals.csv"
        self._write_csv(pd.DataFrame(resid_rows), resid_path)
        paths.append(resid_path)
        self._register("train", *paths)

    def predict(self):
        rows = []
        self.predictions = {}
        for (outcome, month), model in sorted(self.models.items()):
            pred = model.predict(self.X_tgt)
            self.predictions[(outcome, month)] = pd.Series(
                pred, index=self.X_tgt.index)
            for repo, value in zip(self.X_tgt.index, pred):
                rows.append({"outcome": outcome, "month": month,
                             "repo": repo, "Y_hat": value})
        path = self.out / "predictions_target.csv"
        self._write_csv(pd.DataFrame(rows), path)
        self._register("predict", path)

    def effects(self):
        cfg = self.cfg
        ite_frames = []
        conformal_rows = []
        summaries = []
        self.ites = {}
        self.conformal = {}
        for outcome in cfg.outcomes:
            for month in cfg.months_of_interest:
                observed = self.Y_obs[outcome][month]
                predicted = self.predictions[(outcome, month)]
                ite = effects.compute_ite(observed, predicted, month, outcome)
                self.ites[(outcome, month)] = ite
                ite_frames.append(ite)
                residuals = self.test_residuals[(outcome, month)]
                ci = effects.conformal_interval(residuals, alpha=cfg.alpha)
                self.conformal[(outcome, month)] = ci
                conformal_rows.append({"outcome": outcome, "month": month,
                                       "d": ci.d, "alpha": ci.alpha,
                                       "n": ci.n, "k": ci.k})
                summaries.append(effects.residual_distribution_report(
                    residuals + 0.0, np.zeros_like(residuals),
                    ite["ite"].to_numpy(), month, outcome))
        paths = []
        ite_path = self.out / "ite.csv"
        self._write_csv(pd.concat(ite_frames, ignore_index=True), ite_path)
        paths.append(ite_path)
        conf_path = self.out / "conformal.csv"
        self._write_csv(pd.DataFrame(conformal_rows), conf_path)
        paths.append(conf_path)
        summary_path = self.out / "distribution_summary.json"
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summaries, fh, indent=2, sort_keys=True)
        paths.append(summary_path)
        for outcome in cfg.outcomes:
            groups = {"test resid": self.test_residuals[(outcome,
                                                         cfg.months_of_interest[0])]}
            for month in cfg.months_of_interest:
                groups[f"m{month}"] = self.ites[(outcome, month)]["ite"].to_numpy()
            svg = self.out / f"ite_distribution_{outcome}.svg"
            report.plot_distributions(groups, svg,
                                      title=f"ITE by month: {outcome}")
            paths.append(svg)
        self._register("effects", *paths)

    def regress(self):
        cfg = self.cfg
        design = heterogeneity.prepare_design(self.X_tgt)
        constant = [c for c in design.columns if design[c].nunique() <= 1]
        if constant:
            # constant features are collinear with the intercept
            self.manifest["warnings"].append(
                "dropped constant features: " + ", ".join(constant))
            design = design.drop(columns=constant)
        corr = heterogeneity.spearman_matrix(design)
        selection = heterogeneity.cluster_features(corr, cfg.cluster_threshold)
        survivors = selection.representatives
        vifs = heterogeneity.vif(design[survivors])
        if (vifs.replace(np.inf, 1e18) >= 10).any():
            self.manifest["warnings"].append(
                "VIF >= 10 for: "
                + ", ".join(vifs.index[vifs >= 10].tolist()))
        X_sel = heterogeneity.add_intercept(design[survivors])

        paths = []
        cluster_path = self.out / "feature_clusters.json"
        with open(cluster_path, "w", encoding="utf-8") as fh:
            json.dump({"clusters": selection.clusters,
                       "representatives": selection.representatives,
                       "threshold": selection.threshold,
                       "vif": {k: (None if not np.isfinite(v) else v)
                               for k, v in vifs.items()}},
                      fh, indent=2, sort_keys=True)
        paths.append(cluster_path)

        self.bootstrap_reports = {}
        for outcome in cfg.outcomes:
            monthly = {}
            for month in cfg.months_of_interest:
                ite = self.ites[(outcome, month)].set_index("repo")
                Y = ite["Y"].reindex(X_sel.index).to_numpy()
                Y_hat = ite["Y_hat"].reindex(X_sel.index).to_numpy()
                rep = heterogeneity.bootstrap_regress(
                    X_sel, Y, Y_hat,
                    residual_pool=self.test_residuals[(outcome, month)],
                    d=self.conformal[(outcome, month)].d,
                    iterations=cfg.bootstrap_iterations,
                    seed=derive_seed(cfg.seed, "bootstrap", outcome, month),
                    month=month, outcome=outcome)
                monthly[month] = rep
                self.bootstrap_reports[(outcome, month)] = rep
                base = self.out / f"bootstrap_{outcome}_m{month}"
                report.render_table(rep, "csv", f"{base}.csv")
                report.render_table(rep, "text", f"{base}.txt")
                paths += [Path(f"{base}.csv"), Path(f"{base}.txt")]
            multi = heterogeneity.multi_month_report(monthly)
            multi_path = self.out / f"multi_month_{outcome}.csv"
            self._write_csv(multi, multi_path)
            paths.append(multi_path)
        self._register("regress", *paths)

    def finalize(self):
        manifest_path = self.out / "manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
        return manifest_path


STAGES = ("ingest", "aggregate_forecast", "select", "features", "train",
          "predict", "effects", "regress")


def run_pipeline(config: PipelineConfig, until: str = None) -> dict:
    """Execute stages in order (optionally stopping after ``until``);
    returns the manifest (also written to disk)."""
    if until is not None and until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}")
    run = PipelineRun(config)
    for stage in STAGES:
        try:
            getattr(run, stage)()
        except ConfigError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        if stage == until:
            break
    run.finalize()
    return run.manifest

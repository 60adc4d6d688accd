"""
Batch controller: load a manifest, run strategies over its cases, score and report.
"""
import logging
import warnings
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from .config import DEFAULT, PipelineConfig
from .exceptions import NodulemorphError
from .metrics import CaseScore, StratifiedReport, build_report, dsc
from .models import CaseManifest, CaseRecord, SliceResult
from .morphology import Region
from .pipeline import STAGES
from .reporting.html import generate_html_report
from .strategies.abstract import SegmentationStrategy
from .utils.readers import load_case, load_manifest, load_mask
from .utils.writers import save_mask, write_json

logger = logging.getLogger(__name__)

ALERT_COLUMNS = ["method", "case_id", "slice_index", "reason"]

PathLike = Union[str, Path]


def _process_case(args: Tuple[SegmentationStrategy, CaseManifest, PipelineConfig, bool]):
    """Worker entry point: segments one case, never raises for per-case problems."""
    strategy, manifest, config, keep_stages = args
    try:
        record = load_case(manifest)
        return strategy.segment_case(record, config, keep_stages), None
    except (NodulemorphError, IOError, ValueError) as e:
        logger.warning("Case '%s' failed: %s", manifest.case_id, e)
        return [], str(e)


class SegmentationRun:
    """
    The central object representing one segmentation run over a manifest.

    Manages the lifecycle Manifest -> Segmented (per method) -> Scored -> Reported.
    """

    def __init__(self, manifest_path: PathLike, config: PipelineConfig = DEFAULT):
        """
        Loads and validates the manifest.

        Args:
            manifest_path: Path to the JSON case manifest.
            config: Pipeline configuration shared by every strategy.
        """
        self.config = config
        self.manifest_path = Path(manifest_path)
        self.cases: List[CaseManifest] = load_manifest(manifest_path)

        # method label -> case_id -> per-slice results
        self._results: Dict[str, Dict[str, List[SliceResult]]] = {}
        self._records: Dict[str, CaseRecord] = {}
        self._alerts = pd.DataFrame(columns=ALERT_COLUMNS)

    @property
    def alerts(self) -> pd.DataFrame:
        """Failed cases and slices, one row each."""
        return self._alerts

    @property
    def methods(self) -> List[str]:
        return list(self._results)

    def results(self, method: str) -> Dict[str, List[SliceResult]]:
        if method not in self._results:
            raise KeyError(f"No results for method '{method}'. Run .process() first.")
        return self._results[method]

    @property
    def cases_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "case_id": c.case_id,
                    "nodule_type": c.nodule_type.value,
                    "diameter_mm": c.diameter_mm,
                    "diameter_bin": c.diameter_bin,
                    "n_slices": len(c.slices),
                    "roi_source": c.roi_source.value,
                }
                for c in self.cases
            ]
        ).set_index("case_id")

    # --- Processing Core ---

    def process(self, strategy: SegmentationStrategy, jobs: int = 1, keep_stages: bool = False):
        """
        Segments every case with `strategy`.

        Cases run in a process pool when jobs > 1; results keep manifest order.
        Failures are recorded in .alerts and never abort the run.

        Args:
            strategy: Segmentation method to run.
            jobs: Number of worker processes.
            keep_stages: Keep intermediate masks for stage dumps and plots.
        """
        if jobs < 1:
            raise ValueError("jobs must be >= 1.")

        tasks = [(strategy, case, self.config, keep_stages) for case in self.cases]
        if jobs > 1 and len(tasks) > 1:
            with Pool(processes=min(jobs, len(tasks))) as pool:
                outputs = pool.map(_process_case, tasks, chunksize=1)
        else:
            outputs = [_process_case(t) for t in tasks]

        label = strategy.label
        self._results[label] = {}
        alerts = []
        for case, (results, error) in zip(self.cases, outputs):
            self._results[label][case.case_id] = results
            if error is not None:
                alerts.append({"method": label, "case_id": case.case_id, "slice_index": -1, "reason": error})
            for r in results:
                if r.error is not None:
                    alerts.append(
                        {"method": label, "case_id": case.case_id, "slice_index": r.slice_index, "reason": r.error}
                    )

        self._set_alerts(label, alerts)
        logger.info("%s: segmented %d cases", label, len(self.cases))

    def load_predictions(self, method_dir: PathLike, label: Optional[str] = None) -> List[Path]:
        """
        Reads predicted masks written by .save_predictions() for scoring.

        Args:
            method_dir: Directory holding one sub-directory per case.
            label: Method label; defaults to the directory name.

        Returns:
            Paths of expected prediction files that are missing.
        """
        method_dir = Path(method_dir)
        label = label or method_dir.name
        missing: List[Path] = []
        self._results[label] = {}
        for case in self.cases:
            results = []
            record = self._record(case)
            for i in range(len(case.slices)):
                path = method_dir / case.case_id / f"slice_{i:03d}.pgm"
                result = SliceResult(slice_index=i, shape=record.images[i].shape)
                if not path.exists():
                    if i in case.labeled_indices:
                        missing.append(path)
                    result.error = "missing prediction"
                else:
                    mask = load_mask(path)
                    if mask.any():
                        result.region = Region(mask)
                results.append(result)
            self._results[label][case.case_id] = results
        return missing

    def _set_alerts(self, label: str, alerts: List[dict]):
        kept = self._alerts[self._alerts["method"] != label]
        fresh = pd.DataFrame(alerts, columns=ALERT_COLUMNS)
        self._alerts = fresh if kept.empty else pd.concat([kept, fresh], ignore_index=True)
        if alerts:
            warnings.warn(
                f"{label}: {len(alerts)} cases or slices failed and were scored as empty. "
                "Check the .alerts property for details."
            )

    def _record(self, case: CaseManifest) -> CaseRecord:
        if case.case_id not in self._records:
            self._records[case.case_id] = load_case(case)
        return self._records[case.case_id]

    # --- Scoring ---

    def _row_label(self, method: str, case: CaseManifest) -> str:
        sources = {c.roi_source for c in self.cases}
        if len(sources) > 1:
            return f"{method} ({case.roi_source.value})"
        return method

    def scores(self, method: str) -> List[CaseScore]:
        """Per-nodule DSC for every labelled case of `method`."""
        scores = []
        for case in self.cases:
            if not case.labeled_indices:
                continue
            record = self._record(case)
            results = self.results(method).get(case.case_id) or []
            predictions: List[Optional[np.ndarray]] = [None] * len(case.slices)
            for r in results:
                predictions[r.slice_index] = r.mask
            scores.append(CaseScore.from_case(record, predictions, self._row_label(method, case)))
        return scores

    @property
    def report(self) -> StratifiedReport:
        """Stratified DSC report over every processed method."""
        if not self._results:
            raise RuntimeError("Run .process() before requesting a report.")
        return build_report([s for m in self.methods for s in self.scores(m)])

    @property
    def slice_table(self) -> pd.DataFrame:
        """One row per method, case and slice with area, trace summary and DSC."""
        rows = []
        for method in self.methods:
            for case in self.cases:
                record = self._record(case)
                for r in self.results(method).get(case.case_id) or []:
                    gt = record.ground_truth[r.slice_index]
                    rows.append(
                        {
                            "method": method,
                            "case_id": case.case_id,
                            "slice_index": r.slice_index,
                            "area": r.area,
                            "box": r.box.to_list() if r.box else None,
                            "iterations": r.trace.iterations if r.trace else 0,
                            "stop_reason": r.trace.stop_reason.value if r.trace and r.trace.stop_reason else None,
                            "dsc": None if gt is None else dsc(r.mask, gt),
                            "error": r.error,
                        }
                    )
        return pd.DataFrame(rows)

    # --- Output ---

    def save_predictions(self, out_dir: PathLike, dump_stages: bool = False, plots: bool = False):
        """
        Writes one mask per slice and a trace file per case, per method.

        Layout: <out_dir>/<method>/<case_id>/slice_XXX.pgm and traces.json. With
        dump_stages, stage masks go to <case_id>/stages/slice_XXX/.
        """
        out_dir = Path(out_dir)
        for method in self.methods:
            for case in self.cases:
                case_dir = out_dir / method / case.case_id
                case_dir.mkdir(parents=True, exist_ok=True)
                results = self.results(method).get(case.case_id) or []
                traces = []
                for r in results:
                    save_mask(r.mask, case_dir / f"slice_{r.slice_index:03d}.pgm")
                    entry = {
                        "slice_index": r.slice_index,
                        "box": r.box.to_list() if r.box else None,
                        "area": r.area,
                        "error": r.error,
                        "trace": r.trace.to_dict() if r.trace else None,
                    }
                    traces.append(entry)
                    if dump_stages and r.stages:
                        stage_dir = case_dir / "stages" / f"slice_{r.slice_index:03d}"
                        stage_dir.mkdir(parents=True, exist_ok=True)
                        for name in STAGES:
                            if name in r.stages:
                                save_mask(r.stages[name], stage_dir / f"{name}.pgm")
                        write_json(entry, stage_dir / "trace.json")
                        if plots:
                            fig = self.plot_stages(case.case_id, r.slice_index, method).figure
                            fig.savefig(stage_dir / "stages.png", dpi=100)
                            plt.close(fig)
                write_json(traces, case_dir / "traces.json")

    def save_report_json(self, filepath: PathLike):
        write_json(self.report.to_dict(), filepath)

    def save_report(self, filepath: PathLike):
        """
        Exports the stratified report, per-case and per-slice tables to a multi-sheet Excel file.
        """
        if not self._results:
            raise RuntimeError("Run .process() before exporting the report.")

        with pd.ExcelWriter(filepath, engine="openpyxl") as writer:
            # 1. Report Sheet
            self.report.to_frame().to_excel(writer, sheet_name="Report")

            # 2. Cases Sheet
            cases = pd.DataFrame(
                [
                    {"method": s.method, "case_id": s.case_id, "dsc": s.dsc}
                    for m in self.methods
                    for s in self.scores(m)
                ]
            )
            if not cases.empty:
                cases = cases.join(self.cases_table, on="case_id")
            cases.to_excel(writer, sheet_name="Cases", index=False)

            # 3. Slices Sheet
            slices = self.slice_table
            if not slices.empty:
                slices["box"] = slices["box"].astype(str)
            slices.to_excel(writer, sheet_name="Slices", index=False)

            # 4. Parameters/Metadata Sheet
            params = {"Manifest": str(self.manifest_path), "Methods": ", ".join(self.methods)}
            params.update({f"config.{k}": v for k, v in self.config.to_dict().items()})
            pd.Series(params).to_frame("Value").to_excel(writer, sheet_name="Parameters")

    def save_html_report(self, filepath: PathLike):
        """
        Exports the report, per-case scores, alerts and interactive plots to a standalone HTML file.
        """
        generate_html_report(self, filepath)

    # --- Plots ---

    def plot_stages(self, case_id: str, slice_index: int, method: Optional[str] = None):
        """
        Draws the intermediate masks of one slice over its raw crop.

        Needs a run with keep_stages=True. Returns the first axes of the panel.
        """
        method = method or self.methods[-1]
        results = self.results(method).get(case_id)
        if not results:
            raise KeyError(f"No results for case '{case_id}' in method '{method}'.")
        result = next((r for r in results if r.slice_index == slice_index), None)
        if result is None or not result.stages:
            raise ValueError("No stage masks kept. Run .process(..., keep_stages=True).")

        case = next(c for c in self.cases if c.case_id == case_id)
        img = self._record(case).images[slice_index]
        names = [n for n in STAGES if n in result.stages]

        fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 3.2), squeeze=False)
        for ax, name in zip(axes[0], names):
            ax.imshow(img.pixels, cmap="gray")
            overlay = np.ma.masked_where(~result.stages[name], result.stages[name])
            ax.imshow(overlay, cmap="autumn", alpha=0.45, interpolation="nearest")
            ax.set_title(name, fontsize=9)
            ax.axis("off")
        fig.suptitle(f"{case_id} slice {slice_index} ({method})", fontsize=11, fontweight="bold")
        return axes[0][0]

    def plot_strata(self, ax: Optional[plt.Axes] = None):
        """Bar chart of mean DSC per stratum and method."""
        frame = self.report.to_frame().drop(columns=["n"]).reset_index()
        long = frame.melt(id_vars="method", var_name="stratum", value_name="dsc").dropna()
        if ax is None:
            _, ax = plt.subplots(figsize=(10, 5))

        sns.barplot(data=long, x="stratum", y="dsc", hue="method", ax=ax)

        ax.set_title("Mean DSC by stratum", fontsize=12, fontweight="bold")
        ax.set_xlabel("Stratum", fontsize=10)
        ax.set_ylabel("DSC", fontsize=10)
        ax.set_ylim(0, 1)
        ax.grid(True, axis="y", linestyle=":", alpha=0.6)
        ax.legend(title="Method", loc="lower right")
        return ax

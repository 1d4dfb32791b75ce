# Directory evaluation and report output
# Purpose: per-image PSNR / SSIM / LMD (plus registered hooks), means, JSON + text table

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Optional

from pydantic import BaseModel, Field

from config.settings import get_logger, settings
from evalkit.metrics import lmd, psnr, ssim
from imagecore.image import Image
from imagecore.io import load_image
from metric.anchor import load_landmarks
from utils.errors import EvaluationError
from utils.file_manager import config_hash, ensure_dir, list_images, write_json

logger = get_logger(__name__)

REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"

MetricHook = Callable[[Image, Image], float]

_METRIC_HOOKS: dict[str, MetricHook] = {}


def register_metric_hook(name: str, hook: MetricHook) -> None:
    """Per-image provider (e.g. LPIPS backed by a pretrained network) reported as an extra column"""
    if name in ("psnr", "ssim", "lmd"):
        raise EvaluationError(f"Metric name {name!r} is reserved")
    _METRIC_HOOKS[name] = hook


def unregister_metric_hook(name: str) -> None:
    _METRIC_HOOKS.pop(name, None)


class ImageMetrics(BaseModel):
    name: str
    psnr: float
    ssim: float
    lmd: Optional[float] = None
    extra: dict[str, float] = Field(default_factory=dict)


class MetricReport(BaseModel):
    images: list[ImageMetrics]
    aggregates: dict[str, float]
    unmatched: list[str] = Field(default_factory=list)
    config_hash: Optional[str] = None


def aggregate(rows: list[ImageMetrics]) -> dict[str, float]:
    """Arithmetic mean of each metric over the rows that carry it"""
    columns: dict[str, list[float]] = {"psnr": [r.psnr for r in rows], "ssim": [r.ssim for r in rows]}
    lmds = [r.lmd for r in rows if r.lmd is not None]
    if lmds:
        columns["lmd"] = lmds
    for row in rows:
        for key, value in row.extra.items():
            columns.setdefault(key, []).append(value)
    return {key: sum(values) / len(values) for key, values in columns.items()}


def _landmark_file(root: Path, side: str, name: str) -> Optional[Path]:
    path = root / side / f"{Path(name).stem}.txt"
    return path if path.is_file() else None


def _score(job: tuple[str, Path, Path, Optional[Path]]) -> ImageMetrics:
    name, ref_path, test_path, landmarks = job
    ref = load_image(ref_path, "unit")
    test = load_image(test_path, "unit")
    distance = None
    if landmarks is not None:
        ref_points = _landmark_file(landmarks, "ref", name)
        test_points = _landmark_file(landmarks, "test", name)
        if ref_points and test_points:
            distance = lmd(load_landmarks(ref_points), load_landmarks(test_points))
    return ImageMetrics(
        name=name,
        psnr=psnr(ref, test),
        ssim=ssim(ref, test),
        lmd=distance,
        extra={key: float(hook(ref, test)) for key, hook in sorted(_METRIC_HOOKS.items())},
    )


def evaluate_dir(ref_dir, test_dir, landmarks=None) -> MetricReport:
    """Score every filename present in both directories.

    `landmarks`, when given, holds ref/<stem>.txt and test/<stem>.txt 5-point
    files; LMD is reported for images that have both. Files present on one
    side only are listed in `unmatched`.
    """
    ref_files = {p.name: p for p in list_images(ref_dir)}
    test_files = {p.name: p for p in list_images(test_dir)}
    common = sorted(ref_files.keys() & test_files.keys())
    unmatched = sorted(
        [f"ref:{n}" for n in ref_files.keys() - test_files.keys()]
        + [f"test:{n}" for n in test_files.keys() - ref_files.keys()]
    )
    if not common:
        raise EvaluationError(f"No matching filenames between {ref_dir} and {test_dir}; unmatched: {unmatched}")
    if unmatched:
        logger.warning("Unmatched files (not evaluated): %s", ", ".join(unmatched))

    landmark_root = Path(landmarks) if landmarks is not None else None
    jobs = [(name, ref_files[name], test_files[name], landmark_root) for name in common]
    with ThreadPoolExecutor(max_workers=settings.worker_count()) as pool:
        rows = list(pool.map(_score, jobs))
    return MetricReport(images=rows, aggregates=aggregate(rows), unmatched=unmatched)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def format_table(report: MetricReport) -> str:
    """Aligned plain-text table: one row per image and a closing mean row"""
    extra_keys = sorted({k for row in report.images for k in row.extra})
    header = ["name", "PSNR", "SSIM", "LMD", *[k.upper() for k in extra_keys]]
    body = [
        [row.name, _fmt(row.psnr), _fmt(row.ssim), _fmt(row.lmd), *[_fmt(row.extra.get(k)) for k in extra_keys]]
        for row in report.images
    ]
    agg = report.aggregates
    body.append(["mean", _fmt(agg.get("psnr")), _fmt(agg.get("ssim")), _fmt(agg.get("lmd")), *[_fmt(agg.get(k)) for k in extra_keys]])

    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def line(cells: list[str]) -> str:
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))

    rule = "-" * len(line(header))
    return "\n".join([line(header), rule, *map(line, body[:-1]), rule, line(body[-1])]) + "\n"


def write_report(report: MetricReport, out_dir, options: Optional[dict[str, Any]] = None) -> MetricReport:
    """report.json with config_hash of the evaluation options, and report.txt"""
    out_dir = ensure_dir(out_dir)
    report = report.model_copy(update={"config_hash": config_hash(options or {})})
    write_json(report.model_dump(mode="json"), out_dir / REPORT_JSON)
    (out_dir / REPORT_TXT).write_text(format_table(report))
    logger.info("Wrote evaluation report for %d images to %s", len(report.images), out_dir)
    return report

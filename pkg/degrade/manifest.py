# Directory-level degradation with a reproducible manifest
# Purpose: hq_path -> lq_path listing plus a JSON sidecar of sampled parameters

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from config.settings import get_logger, settings
from degrade.pipeline import DegradationRanges, degrade, sample_params
from imagecore.io import load_image, save_image
from utils.file_manager import ensure_dir, list_images, write_json, write_lines

logger = get_logger(__name__)

MANIFEST_TXT = "manifest.txt"
MANIFEST_JSON = "manifest.json"


def _degrade_one(job: tuple[Path, Path, int, DegradationRanges]) -> dict:
    hq_path, lq_path, seed, ranges = job
    params = sample_params(seed, ranges)
    lq = degrade(load_image(hq_path, "unit"), params, seed)
    save_image(lq, lq_path)
    return {
        "hq_path": str(hq_path),
        "lq_path": str(lq_path),
        "seed": seed,
        **params.model_dump(),
    }


def degrade_dir(in_dir, out_dir, seed: int, ranges: Optional[DegradationRanges] = None) -> list[dict]:
    """Degrade every image in in_dir; image k (sorted by name) uses seed + k"""
    ranges = ranges or DegradationRanges()
    out_dir = ensure_dir(out_dir)
    sources = list_images(in_dir)
    jobs = [(src, out_dir / f"{src.stem}.png", seed + k, ranges) for k, src in enumerate(sources)]

    # map() preserves job order
    with ThreadPoolExecutor(max_workers=settings.worker_count()) as pool:
        records = list(pool.map(_degrade_one, jobs))

    write_lines((f"{r['hq_path']}\t{r['lq_path']}" for r in records), out_dir / MANIFEST_TXT)
    write_json({"ranges": ranges.model_dump(), "pairs": records}, out_dir / MANIFEST_JSON)
    logger.info("Degraded %d images into %s", len(records), out_dir)
    return records

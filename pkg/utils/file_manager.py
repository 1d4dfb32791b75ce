import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


def write_json(data: Any, filename) -> Path:
    filename = Path(filename)
    ensure_dir(filename.parent)
    with open(filename, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return filename


def read_json(filename) -> Any:
    with open(filename, "r") as f:
        return json.load(f)


def append_jsonl(record: dict[str, Any], filename) -> None:
    """Append one record to a line-delimited JSON log"""
    with open(filename, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(filename) -> list[dict[str, Any]]:
    if not os.path.exists(filename):
        return []
    with open(filename, "r") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_lines(lines: Iterable[str], filename) -> Path:
    filename = Path(filename)
    ensure_dir(filename.parent)
    with open(filename, "w") as f:
        for line in lines:
            f.write(line + "\n")
    return filename


def config_hash(options: dict[str, Any]) -> str:
    payload = json.dumps(options, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def list_images(directory) -> list[Path]:
    """PNG/JPEG files of a directory in sorted filename order"""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in {".png", ".jpg", ".jpeg"})

import json
import uuid
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Optional, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel

M = TypeVar("M", bound=BaseModel)


def new_spill_path(tmp_dir: Optional[Path], prefix: str = "run") -> Path:
    """
    Return a fresh path for a spill file under tmp_dir (system tmp when None).
    The caller owns the file and must delete it.
    """
    folder = Path(tmp_dir) if tmp_dir else Path(tempfile.gettempdir())
    folder.mkdir(parents=True, exist_ok=True)
    return folder / f"{prefix}-{uuid.uuid4().hex}.jsonl"


def require_artifact(path: Path, stage: str) -> Path:
    """Raise FileNotFoundError naming the stage that produces a missing artifact."""
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the '{stage}' stage first")
    return path


def write_jsonl(path: Path, items: Iterable[BaseModel]) -> int:
    """Write models one per line. Returns the number of lines written."""
    path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(path, "w", encoding="utf-8") as f:
        for item in items:
            f.write(item.model_dump_json())
            f.write("\n")
            written += 1
    return written


def decode_line(line: Union[bytes, str]) -> Optional[str]:
    """UTF-8 text of a raw input line, or None when it does not decode."""
    if isinstance(line, str):
        return line
    try:
        return line.decode("utf-8")
    except UnicodeDecodeError:
        return None


def read_jsonl(path: Path, model: Type[M]) -> Iterator[M]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield model.model_validate_json(line)


def write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: Path, frame: pd.DataFrame) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")

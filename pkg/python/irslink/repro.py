"""
Result tables and the metadata needed to reproduce them.

Every experiment returns a ResultTable: a pandas DataFrame plus a RunMetadata
record holding the config hash, seed and software versions. CSV output keeps
only deterministic metadata so that the same (config, seed) always produces
the same bytes.
"""

import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .config import SystemConfig

__version__ = "1.0.0"

logger = logging.getLogger("IRSLink.Repro")

CSV_METADATA_KEYS = ("experiment", "config_hash", "seed", "software_version")


class IRSJSONEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays."""
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            if np.isnan(obj):
                return None
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        elif isinstance(obj, complex):
            return {"re": obj.real, "im": obj.imag}
        return super().default(obj)


def _dependency_versions() -> Dict[str, str]:
    deps = {}
    for name in ("numpy", "scipy", "pandas", "pydantic"):
        try:
            module = __import__(name)
            deps[name] = module.__version__
        except ImportError:
            pass
    return deps


@dataclass
class RunMetadata:
    """Everything needed to rerun an experiment and get the same table."""
    experiment: str = ""
    config_hash: str = ""
    seed: int = 0
    software_version: str = __version__
    python_version: str = field(
        default_factory=lambda: f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
    )
    dependencies: Dict[str, str] = field(default_factory=_dependency_versions)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    parameters: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @classmethod
    def for_run(cls, experiment: str, config: SystemConfig, **parameters: Any) -> "RunMetadata":
        return cls(experiment=experiment, config_hash=config.config_hash(), seed=config.seed, parameters=parameters)

    def add_warning(self, warning: str) -> None:
        self.warnings.append(warning)
        logger.warning(f"Run warning: {warning}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, cls=IRSJSONEncoder)


@dataclass
class ResultTable:
    """A rectangular result with its run metadata."""
    data: pd.DataFrame
    metadata: RunMetadata

    @property
    def columns(self) -> List[str]:
        return [str(c) for c in self.data.columns]

    def column(self, name: str) -> np.ndarray:
        return self.data[name].to_numpy()

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        """
        Comma-separated table preceded by '# key: value' metadata lines.

        Floats are written with 17 significant digits. Returns the text and
        writes it to path when given.
        """
        meta = self.metadata.to_dict()
        header = "".join(f"# {key}: {meta[key]}\n" for key in CSV_METADATA_KEYS)
        body = self.data.to_csv(index=False, float_format="%.17g", lineterminator="\n")
        text = header + body
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
            logger.info(f"Saved {self.metadata.experiment} table ({len(self.data)} rows) to {path}")
        return text

    def to_json(self, path: Optional[Union[str, Path]] = None) -> str:
        """Single document {"metadata", "columns", "rows"}."""
        rows = self.data.astype(object).where(self.data.notna(), None).to_dict(orient="records")
        document = {"metadata": self.metadata.to_dict(), "columns": self.columns, "rows": rows}
        text = json.dumps(document, indent=2, cls=IRSJSONEncoder)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
            logger.info(f"Saved {self.metadata.experiment} table ({len(self.data)} rows) to {path}")
        return text

    def save(self, path: Union[str, Path], fmt: str = "csv") -> str:
        if fmt == "json":
            return self.to_json(path)
        return self.to_csv(path)

"""Content-addressed corrector cache.

Entries are field files named by the SHA-256 of their canonical JSON key.
Writers go through a private temporary file that is hard-linked into place
(exclusive create) and then made read-only, so readers only ever see complete
files and the first writer of a key wins.
"""

import hashlib
import json
import logging
import os
import uuid
from pathlib import Path
from typing import Optional, Union

from src.homodefect.lib.field_io import EXTENSION, FieldIOError, load_field, save_field
from src.homodefect.lib.grid_fields import GridField

logger = logging.getLogger(__name__)


def cache_key(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CorrectorCache:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise FieldIOError(f"Cannot create cache directory {self.root}: {e}") from e

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}{EXTENSION}"

    def get(self, key: str) -> Optional[GridField]:
        path = self.path_for(key)
        if not path.exists():
            logger.info("Cache miss %s", key[:12])
            return None
        logger.info("Cache hit %s", key[:12])
        return load_field(path)

    def put(self, key: str, field: GridField) -> Path:
        final = self.path_for(key)
        tmp = self.root / f".{key}.{os.getpid()}.{uuid.uuid4().hex}.tmp"
        save_field(field, tmp)
        try:
            os.link(tmp, final)
            os.chmod(final, 0o444)
        except FileExistsError:
            logger.debug("Cache entry %s already written by another worker", key[:12])
        except OSError:
            # Filesystems without hard links fall back to an atomic rename.
            if not final.exists():
                os.replace(tmp, final)
                os.chmod(final, 0o444)
        finally:
            if tmp.exists():
                tmp.unlink()
        return final

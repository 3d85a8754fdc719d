"""In-guest OS resource stores the agent manipulates.

These are structured stores rather than raw bytes: filesystem paths map to
text content, registry hives to key/value maps, and the process table to
opaque memory blobs. Windows-style backslash paths, case-insensitive.
"""

from __future__ import annotations

from .config import ProcessImage


def _norm(path: str) -> str:
    return path.replace("/", "\\").rstrip("\\").lower()


class SimFilesystem:
    def __init__(self, files: dict[str, str]):
        self._display: dict[str, str] = {}  # normalized -> display path
        self._content: dict[str, bytes] = {}
        for path, content in files.items():
            self.write(path, content.encode())

    def exists(self, path: str) -> bool:
        return _norm(path) in self._content

    def is_dir(self, path: str) -> bool:
        prefix = _norm(path) + "\\"
        return any(key.startswith(prefix) for key in self._content)

    def read(self, path: str) -> bytes:
        key = _norm(path)
        if key not in self._content:
            raise FileNotFoundError(path)
        return self._content[key]

    def write(self, path: str, data: bytes) -> None:
        key = _norm(path)
        self._display[key] = path.replace("/", "\\").rstrip("\\")
        self._content[key] = data

    def list_dir(self, path: str) -> tuple[list[str], list[str]]:
        """Immediate (subdirectories, files) under path, by display name."""
        prefix = _norm(path) + "\\"
        dirs: set[str] = set()
        files: list[str] = []
        for key in self._content:
            if not key.startswith(prefix):
                continue
            rest = self._display[key][len(prefix):]
            if "\\" in rest:
                dirs.add(rest.split("\\", 1)[0])
            else:
                files.append(rest)
        if not dirs and not files:
            raise FileNotFoundError(path)
        return sorted(dirs), sorted(files)


class SimRegistry:
    def __init__(self, hives: dict[str, dict[str, str]]):
        self._hives = {h: dict(keys) for h, keys in hives.items()}

    def set_value(self, hive: str, key: str, value: str) -> None:
        if hive not in self._hives:
            raise KeyError(hive)
        self._hives[hive][key] = value

    def get_value(self, hive: str, key: str) -> str:
        return self._hives[hive][key]

    def has_hive(self, hive: str) -> bool:
        return hive in self._hives

    def snapshot(self) -> dict[str, dict[str, str]]:
        return {h: dict(k) for h, k in self._hives.items()}


class SimProcessTable:
    def __init__(self, processes: tuple[ProcessImage, ...]):
        self._by_pid = {p.pid: p for p in processes}

    def get(self, pid: int) -> ProcessImage:
        if pid not in self._by_pid:
            raise KeyError(pid)
        return self._by_pid[pid]

    def by_name(self, name: str) -> ProcessImage | None:
        for proc in self._by_pid.values():
            if proc.name.lower() == name.lower():
                return proc
        return None

    def all(self) -> list[ProcessImage]:
        return sorted(self._by_pid.values(), key=lambda p: p.pid)

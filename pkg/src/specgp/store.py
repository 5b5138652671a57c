from __future__ import annotations

import hashlib
from pathlib import Path
from urllib.parse import urlparse

from .errors import DomainError
from .kernels import HyperBox
from .rule import QuadratureRule


def rule_key(box: HyperBox, epsilon: float, p: int, n: int) -> str:
    """Stable digest of the inputs that determine a built rule."""
    payload = ",".join(repr(float(v)) for v in (*box.as_tuple(), epsilon))
    payload += f";p={p};n={n}"
    return hashlib.sha256(payload.encode("ascii")).hexdigest()[:16]


class RuleStore:
    @staticmethod
    def from_url(url: str) -> RuleStore:
        urlp = urlparse(url)
        if urlp.scheme == "memory":
            return MemoryRuleStore()
        elif urlp.scheme == "file":
            return FileRuleStore(urlp.path)
        elif urlp.scheme == "redis":
            return RedisRuleStore(url)
        else:
            raise DomainError(f"unknown rule store scheme {urlp.scheme!r} in {url!r}")

    def close(self) -> None: ...
    def get(self, key: str) -> QuadratureRule | None: ...
    def put(self, key: str, rule: QuadratureRule) -> None: ...
    def delete(self, key: str) -> None: ...
    def keys(self) -> list[str]: ...


class RedisRuleStore(RuleStore):
    def __init__(self, url: str) -> None:
        try:
            import redis
        except ImportError as e:
            raise DomainError(
                "redis:// rule stores need the redis extra: pip install specgp[redis]"
            ) from e

        self.url = url
        self._client = redis.Redis.from_url(url)

    def close(self) -> None:
        self._client.close()

    def get(self, key: str) -> QuadratureRule | None:
        raw = self._client.get(f"rule:{key}")
        if raw is None:
            return None
        return QuadratureRule.from_text(raw.decode("ascii"))  # type: ignore

    def put(self, key: str, rule: QuadratureRule) -> None:
        self._client.set(f"rule:{key}", rule.to_text())

    def delete(self, key: str) -> None:
        self._client.delete(f"rule:{key}")

    def keys(self) -> list[str]:
        found = self._client.scan_iter(match="rule:*")
        return sorted(k.decode("ascii").removeprefix("rule:") for k in found)  # type: ignore


class FileRuleStore(RuleStore):
    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.rule"

    def close(self) -> None:
        pass

    def get(self, key: str) -> QuadratureRule | None:
        path = self._path(key)
        if not path.exists():
            return None
        return QuadratureRule.load(path)

    def put(self, key: str, rule: QuadratureRule) -> None:
        # write-then-rename so readers never see a partial rule
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_text(rule.to_text(), encoding="ascii")
        tmp.replace(self._path(key))

    def delete(self, key: str) -> None:
        self._path(key).unlink(missing_ok=True)

    def keys(self) -> list[str]:
        return sorted(path.stem for path in self.directory.glob("*.rule"))


class MemoryRuleStore(RuleStore):
    def __init__(self) -> None:
        self._rules: dict[str, str] = {}

    def get(self, key: str) -> QuadratureRule | None:
        text = self._rules.get(key)
        return None if text is None else QuadratureRule.from_text(text)

    def put(self, key: str, rule: QuadratureRule) -> None:
        self._rules[key] = rule.to_text()

    def delete(self, key: str) -> None:
        self._rules.pop(key, None)

    def keys(self) -> list[str]:
        return sorted(self._rules)

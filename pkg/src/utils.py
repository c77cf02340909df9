import hashlib
from pathlib import Path


class ValidationError(ValueError):
    """Base class for every user-facing validation failure (exit code 2)."""


def parse_params(text: str) -> dict:
    """
    Parses a `key=value,key=value` parameter list into a dict of ints.
    Keys keep their case, since descriptors use both `L` and `N`.
    """
    params = {}
    if not text:
        return params
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        if '=' not in item:
            raise ValidationError(f"Expected key=value, got '{item}'")
        key, value = item.split('=', 1)
        try:
            params[key.strip()] = int(value.strip())
        except ValueError:
            raise ValidationError(f"Parameter '{key.strip()}' must be an integer, got '{value.strip()}'") from None
    return params


def require_keys(params: dict, keys: tuple, what: str):
    missing = [key for key in keys if key not in params]
    unknown = [key for key in params if key not in keys]
    if missing:
        raise ValidationError(f"{what} is missing parameter(s): {', '.join(missing)}")
    if unknown:
        raise ValidationError(f"{what} got unknown parameter(s): {', '.join(unknown)}")


def file_digest(path) -> str:
    """sha256 of a file, read in blocks."""
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            h.update(block)
    return h.hexdigest()


def ensure_parent(path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    return path

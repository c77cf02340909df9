import datetime
import sys

_quiet = False


def set_quiet(quiet: bool):
    """Silences info and success lines; warnings and errors are always shown."""
    global _quiet
    _quiet = quiet


def _emit(glyph: str, message: str):
    timestamp = datetime.datetime.now().strftime("%H:%M:%S")
    prefix = f"{glyph} " if glyph else ""
    print(f"[{timestamp}] {prefix}{message}", file=sys.stderr)


def log_info(message: str):
    if not _quiet:
        _emit("", message)


def log_success(message: str):
    if not _quiet:
        _emit("✅", message)


def log_warning(message: str):
    _emit("⚠️", message)


def log_error(message: str):
    _emit("❌", message)


def log_artifact(path, digest: str):
    """Logs a written file together with its content digest."""
    log_success(f"Wrote {path} (sha256 {digest[:12]}…)")

# Per-case driver. Reads one JSON case on stdin, runs solution.py from the
# current directory, prints one JSON result as the last line of stdout.
import json
import os
import sys

_out = sys.stdout
sys.stdout = sys.stderr
_root = os.path.realpath(os.getcwd())

_BLOCKED = (
    "socket.",
    "subprocess.",
    "os.system",
    "os.exec",
    "os.posix_spawn",
    "os.spawn",
    "os.fork",
    "os.forkpty",
    "os.kill",
    "os.killpg",
    "pty.",
    "ctypes.",
    "winreg.",
)
_PATH_EVENTS = {
    "os.remove": 1,
    "os.rmdir": 1,
    "os.mkdir": 1,
    "os.rename": 2,
    "os.replace": 2,
    "os.link": 2,
    "os.symlink": 2,
    "os.truncate": 1,
    "os.chmod": 1,
    "os.chown": 1,
    "os.utime": 1,
    "shutil.rmtree": 1,
    "shutil.move": 2,
    "shutil.copyfile": 2,
}
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC


def _inside(path):
    if isinstance(path, int):
        return True
    try:
        p = os.fsdecode(path)
    except TypeError:
        return False
    full = os.path.realpath(os.path.join(_root, p))
    return full == _root or full.startswith(_root + os.sep)


def _hook(event, args):
    if event.startswith(_BLOCKED):
        raise PermissionError("sandbox: %s is not allowed" % event)
    if event == "open":
        path, mode, flags = args
        writing = (mode is not None and any(c in mode for c in "wax+")) or (
            mode is None and isinstance(flags, int) and flags & _WRITE_FLAGS
        )
        if writing and not _inside(path):
            raise PermissionError("sandbox: write outside sandbox: %r" % (path,))
        return
    n = _PATH_EVENTS.get(event)
    if n is not None:
        for path in args[:n]:
            if not _inside(path):
                raise PermissionError("sandbox: %s outside sandbox: %r" % (event, path))


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


def _finish(ok, stage, value=None, error=None):
    try:
        text = json.dumps(
            {"ok": ok, "stage": stage, "value": _plain(value), "error": error},
            allow_nan=False,
        )
    except (TypeError, ValueError) as exc:
        text = json.dumps(
            {"ok": False, "stage": "run", "value": None, "error": "unserializable result: %s" % exc}
        )
    _out.write("\n" + text + "\n")
    _out.flush()
    os._exit(0)


def _describe(exc):
    return "%s: %s" % (type(exc).__name__, exc)


def main():
    case = json.loads(sys.stdin.read())
    with open("solution.py", encoding="utf-8") as fh:
        source = fh.read()
    try:
        code = compile(source, "solution.py", "exec")
    except (SyntaxError, ValueError) as exc:
        _finish(False, "compile", error=_describe(exc))
    namespace = {"__name__": "__solution__", "__builtins__": __builtins__}
    sys.addaudithook(_hook)
    try:
        exec(code, namespace)
    except BaseException as exc:
        _finish(False, "run", error=_describe(exc))
    if case["kind"] == "assertion":
        try:
            check = compile(case["assertion_source"], "assertion", "exec")
        except (SyntaxError, ValueError) as exc:
            _finish(False, "compile", error="assertion: " + _describe(exc))
        try:
            exec(check, namespace)
        except AssertionError as exc:
            _finish(False, "check", error=_describe(exc))
        except BaseException as exc:
            _finish(False, "run", error=_describe(exc))
        _finish(True, "check")
    func = namespace.get(case["entry_point"])
    if not callable(func):
        _finish(False, "run", error="entry point %r is not defined" % case["entry_point"])
    args = case["input"]
    if not isinstance(args, list):
        args = [args]
    try:
        value = func(*args)
    except BaseException as exc:
        _finish(False, "run", error=_describe(exc))
    _finish(True, "check", value=value)


main()

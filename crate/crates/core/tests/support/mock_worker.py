"""Minimal stand-in for the extractor worker, speaking the JSONL protocol.

Not a sandbox: it execs the source directly. Used only by the client tests.
"""
import ast
import json
import signal
import sys
import time


class Timeout(Exception):
    pass


def on_alarm(signum, frame):
    raise Timeout()


ALLOWED = {"re", "string", "json", "datetime", "time", "html", "bs4"}


class Banned(Exception):
    pass


def imports(tree):
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            yield from (a.name for a in node.names)
        elif isinstance(node, ast.ImportFrom):
            yield node.module or ""


def load(source, entrypoint):
    if any(m.split(".")[0] not in ALLOWED for m in imports(ast.parse(source))):
        raise Banned()
    scope = {}
    exec(compile(source, "<extractor>", "exec"), scope)
    fn = scope.get(entrypoint)
    if not callable(fn):
        raise NameError("no-entrypoint")
    return fn


def main():
    timeout_ms = int(sys.argv[sys.argv.index("--timeout-ms") + 1])
    signal.signal(signal.SIGALRM, on_alarm)
    for line in sys.stdin:
        req = json.loads(line)
        if "HANG_WORKER" in req["source"]:
            time.sleep(3600)
        if req["op"] == "check":
            try:
                load(req["source"], req["entrypoint"])
                out = {"ok": True}
            except SyntaxError:
                out = {"ok": False, "reason": "syntax"}
            except NameError:
                out = {"ok": False, "reason": "no-entrypoint"}
            except Banned:
                out = {"ok": False, "reason": "banned-import"}
            print(json.dumps(out), flush=True)
            continue
        fn = load(req["source"], req["entrypoint"])
        for doc in req["docs"]:
            signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
            try:
                v = fn(doc["text"])
                signal.setitimer(signal.ITIMER_REAL, 0)
                values = [] if v is None else [str(x) for x in (v if isinstance(v, list) else [v])]
                out = {"doc_id": doc["doc_id"], "values": values}
            except Timeout:
                out = {"doc_id": doc["doc_id"], "error": "timeout"}
            except Exception as e:
                signal.setitimer(signal.ITIMER_REAL, 0)
                out = {"doc_id": doc["doc_id"], "error": type(e).__name__}
            print(json.dumps(out), flush=True)


main()

"""Serve a model file as an external cascade stage over stdin/stdout.

    python -m cascadelid.stage_worker MODEL

Any program can act as a stage; this module is the reference child and
also provides :func:`serve` for writing custom ones in Python.
"""

import sys

from .cascade import PROTOCOL_VERSION, unescape_line


def _write(out, line):
    out.write(line.encode("utf-8", "surrogatepass") + b"\n")
    out.flush()


def serve(labels, probs_fn, stdin=None, stdout=None):
    """Answer the parent until ``BYE`` or end of input.

    ``probs_fn(text)`` must return a mapping covering every label.
    Returns the number of documents answered.
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    hello = stdin.readline()
    if hello.rstrip(b"\n") != f"HELLO {PROTOCOL_VERSION}".encode():
        raise SystemExit(f"unexpected greeting {hello!r}")
    _write(stdout, "LABELS " + " ".join(labels))
    answered = 0
    for raw in iter(stdin.readline, b""):
        line = raw[:-1] if raw.endswith(b"\n") else raw
        if line == b"BYE":
            break
        probs = probs_fn(unescape_line(line.decode("utf-8", "surrogatepass")))
        _write(stdout, " ".join(f"{label}={probs[label]!r}" for label in labels))
        answered += 1
    return answered


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m cascadelid.stage_worker MODEL", file=sys.stderr)
        return 2
    from .classifier import load_model, predict

    model = load_model(argv[0])
    serve(model.labels, lambda text: predict(model, text).probs)
    return 0


if __name__ == "__main__":
    sys.exit(main())

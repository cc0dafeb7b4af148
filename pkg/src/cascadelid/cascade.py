"""Multi-stage filter cascade.

A document receives the target label only if every stage accepts it. Early
stages are meant to favor recall and the final stage precision; that bias
comes from each stage's model and rule, the cascade itself just filters.

Stages are backed either by an internal model file or by an external
program speaking the line protocol implemented in :class:`ExternalBackend`.
"""

import json
import logging
import queue
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import load_model, predict
from .errors import ConfigError, HandshakeTimeout, ProtocolError, StageError, TuningError
from .evaluation import prf

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class Argmax:
    """Accept iff the target label is the argmax (lowest label index wins ties)."""

    def to_json(self):
        return "argmax"


@dataclass(frozen=True)
class Threshold:
    """Accept iff ``p_target >= theta``."""

    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.theta}")

    def to_json(self):
        return {"threshold": self.theta}


def parse_rule(raw):
    if raw == "argmax":
        return Argmax()
    if isinstance(raw, dict) and set(raw) == {"threshold"}:
        theta = raw["threshold"]
        if isinstance(theta, bool) or not isinstance(theta, (int, float)):
            raise ConfigError(f"threshold must be a number, got {theta!r}")
        return Threshold(float(theta))
    raise ConfigError(f"rule must be \"argmax\" or {{\"threshold\": number}}, got {raw!r}")


def escape_line(text):
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def unescape_line(line):
    out, i = [], 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            if nxt in "\\n":
                out.append("\n" if nxt == "n" else "\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


class InternalBackend:
    """Stage backend wrapping an in-process :class:`~cascadelid.classifier.Model`."""

    def __init__(self, model, source=None):
        self.model = model
        self.source = source
        self.calls = 0

    @property
    def labels(self):
        return list(self.model.labels)

    def probs(self, text):
        self.calls += 1
        return predict(self.model, text).probs

    def close(self):
        pass


def parse_probs_line(line, labels):
    """Parse ``label=p`` pairs, requiring exactly ``labels`` and a sum near 1."""
    probs = {}
    for field_ in line.split():
        label, sep, value = field_.rpartition("=")
        if not sep or not label:
            raise ProtocolError(f"malformed probability field {field_!r}")
        if label in probs:
            raise ProtocolError(f"label {label!r} reported twice")
        try:
            p = float(value)
        except ValueError:
            raise ProtocolError(f"probability {value!r} is not a number") from None
        if not 0.0 <= p <= 1.0:
            raise ProtocolError(f"probability {p} for {label!r} outside [0, 1]")
        probs[label] = p
    if set(probs) != set(labels):
        raise ProtocolError(f"reply labels {sorted(probs)} do not match handshake labels {sorted(labels)}")
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-3:
        raise ProtocolError(f"probabilities sum to {total}, not 1")
    return probs


class ExternalBackend:
    """A child process answering one line per document.

    Wire protocol (UTF-8, newline-terminated lines on the child's stdin/stdout):

    * parent ``HELLO 1``, child ``LABELS <l1> <l2> ...``
    * parent sends the document with ``\\`` and newline escaped as ``\\\\``
      and ``\\n``; child replies ``<label>=<p> ...`` covering every label
    * parent ``BYE`` at shutdown

    Requests are serialized with a lock, so one backend may be shared by
    threads.
    """

    def __init__(self, command, timeout=DEFAULT_TIMEOUT, env=None):
        if not command or not all(isinstance(a, str) for a in command):
            raise ConfigError("external command must be a non-empty list of strings")
        self.command = list(command)
        self.timeout = timeout
        self.calls = 0
        self._broken = False
        self._lock = threading.Lock()
        self._lines = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, env=env, bufsize=0)
        except OSError as exc:
            raise ConfigError(f"cannot start {self.command[0]!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        try:
            self.labels = self._handshake()
        except Exception:
            self._kill()
            raise

    def _pump(self):
        stream = self._proc.stdout
        try:
            for raw in iter(stream.readline, b""):
                self._lines.put(raw)
        except (OSError, ValueError):
            pass
        finally:
            self._lines.put(None)

    def _send(self, line):
        try:
            self._proc.stdin.write(line.encode("utf-8", "surrogatepass") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"child process closed its input ({exc})") from exc

    def _recv(self, what):
        try:
            raw = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            cls = HandshakeTimeout if what == "handshake" else ProtocolError
            raise cls(f"no {what} reply within {self.timeout}s") from None
        if raw is None:
            code = self._proc.poll()
            raise ProtocolError(f"child process exited (status {code}) before {what} reply")
        if not raw.endswith(b"\n"):
            raise ProtocolError(f"unterminated {what} reply")
        try:
            return raw[:-1].decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolError(f"{what} reply is not valid UTF-8") from None

    def _handshake(self):
        self._send(f"HELLO {PROTOCOL_VERSION}")
        line = self._recv("handshake")
        parts = line.split(" ")
        if parts[0] != "LABELS" or len(parts) < 2 or any(not p for p in parts[1:]):
            raise ProtocolError(f"malformed handshake line {line!r}")
        labels = parts[1:]
        if len(set(labels)) != len(labels):
            raise ProtocolError(f"duplicate labels in handshake {line!r}")
        return labels

    def probs(self, text):
        with self._lock:
            if self._broken:
                raise ProtocolError("backend disabled after an earlier protocol error")
            self.calls += 1
            try:
                self._send(escape_line(text))
                return parse_probs_line(self._recv("document"), self.labels)
            except ProtocolError:
                # the stream may now be out of step with our requests
                self._broken = True
                self._kill()
                raise

    def _kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
        self._proc.wait()
        # child is gone, so the reader sees EOF; let it finish before closing its pipe
        self._reader.join(timeout=5)
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass

    def close(self):
        with self._lock:
            if self._proc.poll() is None:
                try:
                    self._send("BYE")
                    self._proc.stdin.close()
                    self._proc.wait(timeout=self.timeout)
                except (ProtocolError, OSError, subprocess.TimeoutExpired):
                    pass
            self._kill()


def external_stage_handshake(command, timeout=DEFAULT_TIMEOUT):
    """Start ``command``, run the handshake, shut the child down, return its labels."""
    backend = ExternalBackend(command, timeout=timeout)
    try:
        return list(backend.labels)
    finally:
        backend.close()


@dataclass
class Stage:
    name: str
    backend: object
    target_label: str
    rule: object = field(default_factory=Argmax)

    def __post_init__(self):
        if self.target_label not in self.backend.labels:
            raise ConfigError(
                f"stage {self.name!r}: target label {self.target_label!r} not in {self.backend.labels}")


@dataclass(frozen=True)
class StageResult:
    name: str
    p_target: float
    accepted: bool

    @property
    def decision(self):
        return "accept" if self.accepted else "reject"


def decide(rule, probs, labels, target_label):
    """Apply an accept rule to a probability map; ``labels`` fixes tie order."""
    p = probs[target_label]
    if isinstance(rule, Threshold):
        return p >= rule.theta
    best = max(probs[label] for label in labels)
    return next(label for label in labels if probs[label] == best) == target_label


def run_stage(stage, text):
    try:
        probs = stage.backend.probs(text)
    except (ProtocolError, OSError) as exc:
        raise StageError(stage.name, str(exc)) from exc
    accepted = decide(stage.rule, probs, stage.backend.labels, stage.target_label)
    return StageResult(stage.name, probs[stage.target_label], accepted)


@dataclass(frozen=True)
class CascadeOutcome:
    accepted: bool
    trace: tuple
    rejected_by: str = None


class Cascade:
    """Ordered stages sharing one target label."""

    def __init__(self, stages, target_label=None):
        stages = list(stages)
        if not stages:
            raise ConfigError("a cascade needs at least one stage")
        names = [s.name for s in stages]
        if len(set(names)) != len(names):
            raise ConfigError(f"stage names must be unique: {names}")
        targets = {s.target_label for s in stages}
        if target_label is not None:
            targets.add(target_label)
        if len(targets) != 1:
            raise ConfigError(f"all stages must share one target label, got {sorted(targets)}")
        self.stages = stages
        self.target_label = targets.pop()

    def __len__(self):
        return len(self.stages)

    def close(self):
        for stage in self.stages:
            stage.backend.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_cascade(cascade, text):
    """Run stages in order, stopping at the first reject."""
    trace = []
    for stage in cascade.stages:
        result = run_stage(stage, text)
        trace.append(result)
        if not result.accepted:
            return CascadeOutcome(False, tuple(trace), stage.name)
    return CascadeOutcome(True, tuple(trace), None)


def load_cascade(path, timeout=DEFAULT_TIMEOUT):
    """Build a :class:`Cascade` from a JSON config; model paths are relative to it."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read cascade config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cascade config {path} is not valid JSON: {exc}") from exc
    return cascade_from_dict(raw, base_dir=path.parent, timeout=timeout)


def cascade_from_dict(raw, base_dir=".", timeout=DEFAULT_TIMEOUT):
    if not isinstance(raw, dict) or set(raw) != {"target_label", "stages"}:
        raise ConfigError("cascade config must be an object with exactly \"target_label\" and \"stages\"")
    target = raw["target_label"]
    if not isinstance(target, str) or not target:
        raise ConfigError("target_label must be a non-empty string")
    if not isinstance(raw["stages"], list) or not raw["stages"]:
        raise ConfigError("stages must be a non-empty list")
    stages = []
    try:
        for entry in raw["stages"]:
            stages.append(_stage_from_dict(entry, target, Path(base_dir), timeout))
        return Cascade(stages, target)
    except Exception:
        for stage in stages:
            stage.backend.close()
        raise


def _stage_from_dict(entry, target, base_dir, timeout):
    if not isinstance(entry, dict) or not {"name", "backend"} <= set(entry) <= {"name", "backend", "rule"}:
        raise ConfigError(f"malformed stage entry {entry!r}")
    name = entry["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError("stage name must be a non-empty string")
    rule = parse_rule(entry.get("rule", "argmax"))
    spec = entry["backend"]
    if isinstance(spec, dict) and set(spec) == {"model"}:
        model_path = base_dir / spec["model"]
        try:
            backend = InternalBackend(load_model(model_path), source=str(model_path))
        except OSError as exc:
            raise ConfigError(f"stage {name!r}: cannot load model {model_path}: {exc}") from exc
    elif isinstance(spec, dict) and set(spec) == {"command"}:
        try:
            backend = ExternalBackend(spec["command"], timeout=timeout)
        except ProtocolError as exc:
            raise StageError(name, f"handshake failed: {exc}") from exc
    else:
        raise ConfigError(f"stage {name!r}: backend must be {{\"model\": path}} or {{\"command\": [argv...]}}")
    try:
        return Stage(name, backend, target, rule)
    except ConfigError:
        backend.close()
        raise


@dataclass(frozen=True)
class F1:
    """Maximize target-vs-rest F1."""


@dataclass(frozen=True)
class PrecisionAtMinRecall:
    """Maximize precision among thresholds with recall >= ``min_recall``."""

    min_recall: float

    def __post_init__(self):
        if not 0.0 <= self.min_recall <= 1.0:
            raise TuningError(f"min_recall must be in [0, 1], got {self.min_recall}")


def tune_threshold_scores(scores, positives, objective=F1()):
    """Best threshold over ``{0, 1} ∪ scores`` for binary gold flags.

    Returns ``(theta, value)``. Ties go to the largest threshold, which is the
    more precise choice.
    """
    scores = [float(s) for s in scores]
    positives = [bool(p) for p in positives]
    if len(scores) != len(positives):
        raise TuningError("scores and gold flags differ in length")
    n_pos = sum(positives)
    if n_pos == 0 or n_pos == len(positives):
        raise TuningError("validation set needs at least one positive and one negative example")

    # sweep from the largest candidate down, counting scores >= theta
    ranked = sorted(zip(scores, positives), key=lambda sp: -sp[0])
    candidates = sorted(set(scores) | {0.0, 1.0}, reverse=True)
    best = None
    tp = fp = i = 0
    for theta in candidates:
        while i < len(ranked) and ranked[i][0] >= theta:
            if ranked[i][1]:
                tp += 1
            else:
                fp += 1
            i += 1
        precision, recall, f1 = prf(tp, fp, n_pos - tp)
        if isinstance(objective, PrecisionAtMinRecall):
            if recall < objective.min_recall:
                continue
            value = precision
        else:
            value = f1
        if best is None or value > best[1]:
            best = (theta, value)
    if best is None:
        raise TuningError(f"no threshold reaches recall >= {objective.min_recall}")
    return best


def stage_scores(backend, texts, target_label):
    return [backend.probs(t)[target_label] for t in texts]


def tune_threshold(model, valset, target_label, objective=F1()):
    """Tune a Threshold rule for ``model`` on labeled ``(label, text)`` pairs."""
    valset = list(valset)
    scores = [predict(model, text).probs[target_label] for _, text in valset]
    theta, _ = tune_threshold_scores(scores, [label == target_label for label, _ in valset], objective)
    return theta


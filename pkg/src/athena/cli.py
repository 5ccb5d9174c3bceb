"""Operator command line: every pipeline stage behind one entry point.

Exit codes: 0 success, 1 usage error, 2 data or model error. A config file
of ``key = value`` lines (see README) can preset any flag default; command
line flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from pathlib import Path

from .catalog import (
    ConfigError,
    ParseError,
    ValidationError,
    load_dataset,
    save_dataset,
)
from .cbf import EmptyCorpusError
from .cf import (
    BundleFormatError,
    EmptyMatrixError,
    EventWeights,
    UnknownUserError,
    build_interaction_matrix,
    load_bundle,
    save_bundle,
)
from .evaluate import (
    EvalConfig,
    EvalError,
    EvalReport,
    FractionError,
    compare_filters,
)
from .hybrid import BlendConfig, assemble, recommend, train_models
from .notify import DeliveryLog, FileSink, scheduler_tick
from .synth import SynthConfig, generate_synthetic

DATA_ERRORS = (
    OSError,
    ParseError,
    ValidationError,
    ConfigError,
    BundleFormatError,
    EmptyCorpusError,
    EmptyMatrixError,
    UnknownUserError,
    EvalError,
    FractionError,
    ValueError,
)


class CliParser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def load_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` pairs; '#' starts a comment; quotes optional."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line without '=': {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip().strip("\"'")
    return out


class Settings:
    """Resolves flag values: command line beats config file beats default."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str], command: str):
        self.args = vars(args)
        self.config = config
        self.command = command

    def get(self, name: str, default, cast=None):
        value = self.args.get(name.replace("-", "_"))
        if value is not None:
            return value
        raw = self.config.get(f"{self.command}.{name}", self.config.get(name))
        if raw is None:
            return default
        cast = cast or (type(default) if default is not None else str)
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)


def _models_for(data_dir, model_path, k):
    dataset = load_dataset(data_dir)
    if model_path:
        cf_model, tfidf, header = load_bundle(model_path)
        return dataset, assemble(
            dataset, cf_model, tfidf, EventWeights(), header["fingerprint"], header["trained_at"]
        )
    return dataset, train_models(dataset, k=k)


def cmd_gen_data(s: Settings) -> int:
    cfg = SynthConfig(
        n_users=s.get("users", 50),
        n_items=s.get("items", 200),
        n_events=s.get("events", 2000),
        cold_item_fraction=s.get("cold-frac", 0.1),
        empty_description_fraction=s.get("empty-frac", 0.1),
    )
    seed = s.get("seed", 0)
    out = Path(s.get("out", "data"))
    dataset = generate_synthetic(cfg, seed)
    save_dataset(dataset, out)
    print(f"wrote {len(dataset.items)} items, {len(dataset.users)} users, "
          f"{len(dataset.events)} events to {out}")
    return 0


def cmd_train(s: Settings) -> int:
    data_dir = s.get("data", "data")
    out = s.get("out", "model.bundle")
    k = s.get("k", None, cast=int)
    dataset = load_dataset(data_dir)
    started = time.perf_counter()
    models = train_models(dataset, k=k, trained_at=time.time())
    duration = time.perf_counter() - started
    if models.cf is None:
        print("error: no events to train the collaborative model on", file=sys.stderr)
        return 2
    matrix = build_interaction_matrix(
        dataset.events, models.weights,
        user_ids=[u.id for u in dataset.users], item_ids=[i.id for i in dataset.items],
    )
    save_bundle(out, models.cf, models.tfidf, models.fingerprint)
    print(f"k: {models.cf.k}")
    print(f"matrix density: {matrix.density:.4f}")
    print(f"train seconds: {duration:.3f}")
    print(f"bundle: {out}")
    return 0


def cmd_recommend(s: Settings) -> int:
    user_id = s.get("user", None)
    if user_id is None:
        print("error: --user is required", file=sys.stderr)
        return 1
    _, models = _models_for(s.get("data", "data"), s.get("model", None), s.get("k", None, cast=int))
    blend = BlendConfig(alpha=s.get("alpha", 0.5))
    recs = recommend(user_id, s.get("n", 10), models, blend)
    if not recs:
        print("no recommendations (user has seen everything that passes their filters)")
        return 0
    width = max(len(r.item_id) for r in recs)
    print(f"{'item':<{width}}  score   source      reason")
    for r in recs:
        print(f"{r.item_id:<{width}}  {r.score:.4f}  {r.source:<10}  {r.reason}")
    return 0


def _parse_configs(raw: str) -> list[EvalConfig]:
    configs = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk == "cf":
            configs.append(EvalConfig.cf_only())
        elif chunk == "cbf":
            configs.append(EvalConfig.cbf_only())
        elif chunk.startswith("hybrid"):
            _, _, alpha = chunk.partition(":")
            configs.append(EvalConfig.hybrid(float(alpha) if alpha else 0.5))
        else:
            raise ValueError(f"unknown eval config {chunk!r} (use hybrid[:alpha], cf, cbf)")
    if not configs:
        raise ValueError("no eval configs given")
    return configs


def _parse_seeds(raw: str) -> list[int]:
    raw = raw.strip()
    if ".." in raw:
        lo, _, hi = raw.partition("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in raw.split(",") if x.strip()]


def cmd_evaluate(s: Settings) -> int:
    dataset = load_dataset(s.get("data", "data"))
    configs = _parse_configs(s.get("configs", "hybrid:0.5,cf,cbf"))
    seeds = _parse_seeds(s.get("seeds", "1"))
    n = s.get("n", 10)
    test_fraction = s.get("test-frac", 0.2)
    k = s.get("k", None, cast=int)
    rows = []
    for seed in seeds:
        report = compare_filters(dataset, configs, n=n, test_fraction=test_fraction, seed=seed, k=k)
        rows.extend(report.rows)
    merged = EvalReport(rows=tuple(rows), n=n, test_fraction=test_fraction)
    print(merged.to_text())
    json_path = s.get("json", None)
    if json_path:
        Path(json_path).write_text(merged.to_json(), encoding="utf-8")
        print(f"json report: {json_path}")
    csv_path = s.get("csv", None)
    if csv_path:
        Path(csv_path).write_text(merged.to_csv(), encoding="utf-8")
        print(f"csv report: {csv_path}")
    return 0


def cmd_serve(s: Settings) -> int:
    import uvicorn

    from .service import EventStore, ModelHandle, create_app

    data_dir = Path(s.get("data", "data"))
    addr = s.get("addr", None) or __import__("os").environ.get("ATHENA_ADDR", "127.0.0.1:8000")
    host, _, port = addr.partition(":")
    store = EventStore(data_dir)
    handle = ModelHandle(k=s.get("k", None, cast=int))
    static_dir = s.get("static", None)
    app = create_app(store, handle, train_on_start=True,
                     static_dir=Path(static_dir) if static_dir else None)

    outbox = Path(s.get("outbox", data_dir / "outbox"))
    tick_seconds = s.get("tick-seconds", 60)
    retrain_every = s.get("retrain-every", 0)
    log = DeliveryLog(data_dir / "deliveries.jsonl")
    sink = FileSink(outbox)

    def scheduler_loop():
        while True:
            time.sleep(tick_seconds)
            _, models = handle.published()
            if models is not None:
                try:
                    scheduler_tick(int(time.time()), list(store.users.values()), models, log, sink)
                except Exception as exc:  # tick failures must not kill serving
                    print(f"scheduler tick failed: {exc}", file=sys.stderr)

    threading.Thread(target=scheduler_loop, daemon=True).start()

    if retrain_every:
        def retrain_loop():
            while True:
                time.sleep(retrain_every)
                try:
                    handle.start_retrain(store)
                except Exception:
                    pass  # already running: coalesce

        threading.Thread(target=retrain_loop, daemon=True).start()

    print(f"serving on http://{host}:{port or 8000} (data: {data_dir}, outbox: {outbox})")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
    return 0


def cmd_notify_run(s: Settings) -> int:
    data_dir = Path(s.get("data", "data"))
    now = s.get("now", None, cast=int) or int(time.time())
    dataset, models = _models_for(data_dir, s.get("model", None), s.get("k", None, cast=int))
    outbox = Path(s.get("outbox", data_dir / "outbox"))
    log = DeliveryLog(data_dir / "deliveries.jsonl")
    records = scheduler_tick(now, dataset.users, models, log, FileSink(outbox))
    for record in records:
        print(f"{record.user_id}: {record.status} ({len(record.item_ids)} items)")
    print(f"tick at {now}: {len(records)} deliveries attempted")
    return 0


def cmd_bench(s: Settings) -> int:
    dataset = load_dataset(s.get("data", "data"))
    k = s.get("k", None, cast=int)
    started = time.perf_counter()
    models = train_models(dataset, k=k)
    train_seconds = time.perf_counter() - started
    started = time.perf_counter()
    n_recs = 0
    for user in dataset.users:
        n_recs += len(recommend(user.id, 10, models))
    recommend_seconds = time.perf_counter() - started
    print(f"train seconds: {train_seconds:.3f}")
    print(f"full-recommend seconds: {recommend_seconds:.3f} ({len(dataset.users)} users, {n_recs} rows)")
    return 0


def build_parser() -> CliParser:
    parser = CliParser(prog="athena", description="hybrid recommendation engine toolkit")
    parser.add_argument("--config", help="key = value file presetting flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--users", type=int)
    p.add_argument("--items", type=int)
    p.add_argument("--events", type=int)
    p.add_argument("--cold-frac", type=float)
    p.add_argument("--empty-frac", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("train", help="train models and write the bundle")
    p.add_argument("--data")
    p.add_argument("--k", type=int)
    p.add_argument("--out")

    p = sub.add_parser("recommend", help="print recommendations for a user")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--user")
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)

    p = sub.add_parser("evaluate", help="compare filter configurations")
    p.add_argument("--data")
    p.add_argument("--configs")
    p.add_argument("--n", type=int)
    p.add_argument("--test-frac", type=float)
    p.add_argument("--seeds")
    p.add_argument("--k", type=int)
    p.add_argument("--json")
    p.add_argument("--csv")

    p = sub.add_parser("serve", help="run the HTTP service and scheduler loop")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--addr")
    p.add_argument("--k", type=int)
    p.add_argument("--outbox")
    p.add_argument("--tick-seconds", type=int)
    p.add_argument("--retrain-every", type=int)
    p.add_argument("--static")

    p = sub.add_parser("notify", help="notification operations")
    notify_sub = p.add_subparsers(dest="notify_command", required=True)
    pr = notify_sub.add_parser("run", help="run one scheduler tick (cron-friendly)")
    pr.add_argument("--now", type=int)
    pr.add_argument("--data")
    pr.add_argument("--model")
    pr.add_argument("--outbox")
    pr.add_argument("--k", type=int)

    p = sub.add_parser("bench", help="print train and full-recommend wall times")
    p.add_argument("--data")
    p.add_argument("--k", type=int)

    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        try:
            config = load_config_file(args.config)
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
    command = args.command
    if command == "notify":
        command = f"notify.{args.notify_command}"
        runner = cmd_notify_run
    else:
        runner = COMMANDS[command]
    settings = Settings(args, config, command)
    try:
        return runner(settings)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: explain, edit, simulate, gen-corpus, serve.

Human-readable output by default, ``--json`` for machine consumption; errors
go to standard error with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from .clausegen import GenerationContext, RemoteGenerator, RuleBasedGenerator
from .decompose import decompose
from .errors import SqlRefineError
from .evaluate import ExecutionChecker
from .explain import explain_query, paraphrase
from .parser import parse_sql
from .pipeline import apply_step_edit
from .render import render_sql
from .schema import SchemaCatalog, load_schema
from .clausegen import render_clause_sql
from .simulate import evaluate_corpus


def _load_schemas(path_str: str) -> dict[str, SchemaCatalog]:
    path = Path(path_str)
    if path.is_dir():
        schemas = {}
        for file in sorted(path.glob("*.json")):
            catalog = load_schema(file)
            schemas[catalog.schema_id] = catalog
        if not schemas:
            raise SqlRefineError(f"no schema files in {path}")
        return schemas
    catalog = load_schema(path)
    return {catalog.schema_id: catalog}


def _single_schema(path_str: str) -> SchemaCatalog:
    schemas = _load_schemas(path_str)
    if len(schemas) != 1:
        raise SqlRefineError("--schema must point at a single schema file here")
    return next(iter(schemas.values()))


def _read_sql_arg(arg: str) -> str:
    path = Path(arg)
    if path.exists() and path.is_file():
        return path.read_text(encoding="utf-8").strip()
    return arg


def _read_corpus(path_str: str) -> list[dict]:
    path = Path(path_str)
    if not path.exists():
        raise SqlRefineError(f"corpus file not found: {path}")
    items = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                items.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SqlRefineError(f"{path}:{line_no}: bad JSON line: {exc}") from None
    return items


def cmd_explain(args) -> int:
    schema = _single_schema(args.schema)
    sql = _read_sql_arg(args.sql)
    explanation = explain_query(decompose(parse_sql(sql, schema)), schema)
    if args.json:
        print(json.dumps(explanation.to_dict(), indent=2))
    else:
        for step in explanation.steps:
            print(f"{step.index}. {step.text}")
    return 0


def cmd_edit(args) -> int:
    schema = _single_schema(args.schema)
    sql = _read_sql_arg(args.sql)
    ast = parse_sql(sql, schema)
    generator = RemoteGenerator(args.backend) if args.backend not in (None, "stub") \
        else RuleBasedGenerator()
    new_ast, path = apply_step_edit(ast, schema, args.step, args.text, generator)
    new_sql = render_sql(new_ast)
    if args.json:
        explanation = explain_query(decompose(new_ast), schema)
        print(json.dumps({"sql": new_sql, "path": path,
                          "explanation": explanation.to_dict()}, indent=2))
    else:
        print(new_sql)
        print(f"path={path}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    schemas = _load_schemas(args.schema)
    items = _read_corpus(args.corpus)
    generator = RemoteGenerator(args.clausegen) if args.clausegen else RuleBasedGenerator()
    backend_factory = None
    if args.backend and args.backend != "stub":
        from .simulate import RemoteTextToSql

        remote = RemoteTextToSql(args.backend)

        def backend_factory(item, schema, rng):  # noqa: F811 - deliberate rebind
            return remote
    executor = ExecutionChecker(args.executor_db) if args.executor_db else None
    report = evaluate_corpus(items, schemas, generator=generator, rounds=args.rounds,
                             paraphrase_on=args.paraphrase == "on", seed=args.seed,
                             backend_factory=backend_factory, executor=executor)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.to_table())
        for failure in report.failures:
            print(f"failed: {failure}", file=sys.stderr)
    return 0


def cmd_gen_corpus(args) -> int:
    schemas = _load_schemas(args.schema)
    items = _read_corpus(args.corpus)
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    paraphrases = 0 if args.paraphrase == "off" else args.paraphrases
    count = 0
    try:
        for pos, item in enumerate(items):
            schema = schemas.get(item.get("db_id"))
            if schema is None:
                raise SqlRefineError(f"unknown db_id {item.get('db_id')!r}")
            explanation = explain_query(decompose(parse_sql(item["gold_sql"], schema)),
                                        schema)
            for step in explanation.steps:
                if step.role != "clause":
                    continue
                variants = [step.text]
                for k in range(paraphrases):
                    rng = random.Random(args.seed + pos * 10007 + step.index * 101 + k)
                    variants.append(paraphrase(step, rng=rng).text)
                for text in variants:
                    pair = {
                        "explanation": text,
                        "clause_sql": render_clause_sql(step.clause),
                        "db_id": item["db_id"],
                        "clause_kind": step.kind.value,
                    }
                    out_fh.write(json.dumps(pair) + "\n")
                    count += 1
    finally:
        if args.out:
            out_fh.close()
    print(f"wrote {count} pairs", file=sys.stderr)
    return 0


def cmd_convert_schema(args) -> int:
    from .schema import from_benchmark_tables

    with open(args.tables, encoding="utf-8") as fh:
        entries = json.load(fh)
    if isinstance(entries, dict):
        entries = [entries]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        doc = from_benchmark_tables(entry)
        schema_id = doc.pop("schema_id")
        load_schema(doc, schema_id=schema_id)  # validate before writing
        path = out_dir / f"{schema_id}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(path)
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.bind)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqlrefine",
                                     description="SQL refinement through editable explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="print the step-by-step explanation of a query")
    p.add_argument("sql", help="SQL text or a file containing it")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("edit", help="apply one step edit to a query")
    p.add_argument("sql", help="SQL text or a file containing it")
    p.add_argument("step", type=int, help="step index to edit (1-based)")
    p.add_argument("text", help="new step text")
    p.add_argument("--schema", required=True)
    p.add_argument("--backend", default="stub",
                   help="clause generator: 'stub' (rule-based) or a URL")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("simulate", help="run the simulated-user refinement loop over a corpus")
    p.add_argument("corpus", help="JSON-lines corpus: {question, gold_sql, db_id, difficulty}")
    p.add_argument("--schema", required=True, help="schema file or directory")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--backend", default="stub",
                   help="text-to-SQL backend: 'stub' (corrupted gold) or a URL")
    p.add_argument("--clausegen", default=None, help="remote clause generator URL")
    p.add_argument("--paraphrase", choices=("on", "off"), default="off")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--executor-db", default=None,
                   help="SQLite database for execution accuracy")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-corpus", help="emit explanation/clause training pairs")
    p.add_argument("corpus", help="JSON-lines corpus: {question, gold_sql, db_id, ...}")
    p.add_argument("--schema", required=True, help="schema file or directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paraphrase", choices=("on", "off"), default="on")
    p.add_argument("--paraphrases", type=int, default=2,
                   help="paraphrased variants per clause")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("convert-schema",
                       help="convert benchmark tables.json metadata to schema documents")
    p.add_argument("tables", help="tables.json file (one entry or a list)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_convert_schema)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--bind", default=None, help="host:port (or SQLREFINE_BIND)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SqlRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

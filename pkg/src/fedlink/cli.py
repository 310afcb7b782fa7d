"""``fedlink`` command line: one executable, a global role and data directory.

Exit codes: 0 success, 1 user error (bad parameters, unknown function, access
denied), 2 data or configuration error.
"""

from __future__ import annotations

import json
import logging
import shlex
import sys
from pathlib import Path

import click

from . import dispatch as dsp
from .assets import AssetDefinition, AssetStore
from .errors import (
    AccessDenied,
    BadParams,
    DuplicateAssetId,
    FedlinkError,
    ScriptSyntax,
    UnknownAssetId,
    UnknownConditionType,
)
from .federation import META_FILE, Federation, load_federation
from .fhirmap import map_dataset, parse_mapping_spec, shipped_spec
from .governance import Role, load_roles
from .ingest import load_directory
from .linkage import LinkageConfig, MetaRecordSet, build_meta_records, evaluate_linkage, link_deterministic
from .model import SYSTEMS, System
from .synthgen import GeneratorConfig, generate, read_ground_truth, write_bundle

ENV_DATA_DIR = "FEDLINK_DATA_DIR"
USER_ERRORS = (BadParams, UnknownConditionType, AccessDenied, UnknownAssetId, DuplicateAssetId, ScriptSyntax)


class Ctx:
    def __init__(self, data_dir: Path, role: Role):
        self.data_dir = data_dir
        self.role = role
        self._fed: Federation | None = None

    @property
    def fed(self) -> Federation:
        if self._fed is None:
            self._fed = load_federation(self.data_dir)
        return self._fed

    @property
    def assets(self) -> AssetStore:
        return AssetStore(self.data_dir / "assets")


pass_ctx = click.make_pass_decorator(Ctx)


@click.group()
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path), envvar=ENV_DATA_DIR,
              default="data", show_default=True, help=f"Data directory (env {ENV_DATA_DIR}).")
@click.option("--role", default="analyst", show_default=True, help="Role every command runs under.")
@click.option("--roles-file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Alternative roles.conf.")
@click.option("-v", "--verbose", is_flag=True, help="Log access decisions to stderr.")
@click.pass_context
def cli(ctx: click.Context, data_dir: Path, role: str, roles_file: Path | None, verbose: bool) -> None:
    """Federated integration engine over synthetic HIPE, CDM, PCRS and RetinaScreen data."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s")
    roles = load_roles(roles_file)
    if role not in roles:
        raise click.BadParameter(f"unknown role {role!r}; known: {', '.join(sorted(roles))}", param_hint="--role")
    ctx.obj = Ctx(data_dir, roles[role])


@cli.command()
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--population", type=int, default=None, help="Overrides the config population.")
@click.option("--corruption-rate", type=float, default=None)
@click.option("--ihi-coverage", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output directory (defaults to the data directory).")
@pass_ctx
def synth(c: Ctx, seed, population, corruption_rate, ihi_coverage, config_path, out) -> int:
    """Generate a synthetic bundle (4 sources, 4 PII sidecars, ground truth)."""
    cfg = GeneratorConfig.from_file(config_path) if config_path else GeneratorConfig()
    overrides = {k: v for k, v in dict(seed=seed, population=population, corruption_rate=corruption_rate,
                                       ihi_coverage=ihi_coverage).items() if v is not None}
    cfg = GeneratorConfig.from_dict({**cfg.to_dict(), **overrides})
    out = out or c.data_dir
    manifest = write_bundle(generate(cfg), out)
    for f in manifest["files"]:
        click.echo(f"{f['path']}\t{f['rows']}")
    click.echo(f"config_hash\t{manifest['config_hash']}")
    return 0


@cli.command()
@pass_ctx
def load(c: Ctx) -> int:
    """Load and validate all four systems; flags assets built on earlier loads as stale."""
    sources = load_directory(c.data_dir)
    for system in SYSTEMS:
        ds = sources[system]
        click.echo(f"{system.value}\t{len(ds)} rows\t{len(ds.pii) if ds.pii else 0} pii")
    if (c.data_dir / "assets").exists():
        for asset_id in c.assets.mark_stale(SYSTEMS):
            click.echo(f"stale\t{asset_id}")
    return 0


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help=f"Meta-record file (defaults to <data-dir>/{META_FILE}).")
@click.option("--deterministic-only", is_flag=True, help="Skip the fuzzy pass.")
@pass_ctx
def link(c: Ctx, config_path, out, deterministic_only) -> int:
    """Build Patient Meta-Records and write them with the review links."""
    sources = load_directory(c.data_dir)
    if deterministic_only:
        meta = link_deterministic(sources)
    else:
        meta = build_meta_records(sources, config=LinkageConfig.from_file(config_path) if config_path else None)
    out = out or c.data_dir / META_FILE
    meta.write_csv(out)
    review = out.with_name(out.stem + ".review.csv")
    meta.write_review_csv(review)
    click.echo(f"meta_records\t{len(meta)}\t{out}")
    click.echo(f"review_links\t{len(meta.review)}\t{review}")
    click.echo(f"conflicts\t{len(meta.conflicts)}")
    return 0


@cli.command("link-eval")
@click.option("--truth", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None)
@click.option("--meta", "meta_path", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None)
@pass_ctx
def link_eval(c: Ctx, truth, meta_path) -> int:
    """Pairwise precision / recall / F1 of the meta-records against the ground truth."""
    meta = MetaRecordSet.read_csv(meta_path or c.data_dir / META_FILE)
    q = evaluate_linkage(meta, read_ground_truth(truth or c.data_dir / "ground_truth.csv"))
    click.echo(f"precision\t{q.precision:.6f}\nrecall\t{q.recall:.6f}\nf1\t{q.f1:.6f}")
    return 0


@cli.command("map")
@click.option("--system", "system_name", default="all", show_default=True)
@click.option("--meta", "meta_path", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None)
@click.option("--spec", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None,
              help="Mapping spec (defaults to the shipped one; single system only).")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@pass_ctx
def map_cmd(c: Ctx, system_name, meta_path, spec, out_dir) -> int:
    """Map sources to resource graphs under fhir/<system>.ndres."""
    try:
        systems = SYSTEMS if system_name.lower() == "all" else (System.parse(system_name),)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--system") from None
    if spec is not None and len(systems) != 1:
        raise click.UsageError("--spec needs a single --system")
    sources = load_directory(c.data_dir)
    meta_path = meta_path or c.data_dir / META_FILE
    meta = MetaRecordSet.read_csv(meta_path) if meta_path.exists() else build_meta_records(sources)
    out_dir = out_dir or c.data_dir / "fhir"
    out_dir.mkdir(parents=True, exist_ok=True)
    for system in systems:
        s = parse_mapping_spec(spec) if spec else shipped_spec(system)
        graph, report = map_dataset(sources[system], s, meta)
        graph.write_ndres(out_dir / f"{system.stem}.ndres")
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _emit(table, c: Ctx, out: Path | None, limit: int | None) -> None:
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        dsp.write_result_csv(table, out, c.role)
    else:
        click.echo(dsp.render_table(table, limit=limit))


@cli.command()
@click.option("--type", "condition_type", required=True)
@click.option("--params", default="", help="Comma-separated parameter values.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--limit", type=int, default=50, show_default=True, help="Rows shown when printing.")
@pass_ctx
def query(c: Ctx, condition_type, params, out, limit) -> int:
    """Dispatch one condition type and print or export result_value."""
    outcome = dsp.dispatch(c.fed, condition_type, params, c.role)
    if isinstance(outcome, dsp.Notice):
        click.echo(f"NOTICE: {outcome.message}")
        return 1
    _emit(outcome, c, out, limit)
    return 0


def menu_text() -> str:
    lines = ["Functions:"]
    for i, name in enumerate(dsp.CONDITION_TYPES, start=1):
        ct = dsp.REGISTRY[name]
        lines.append(f"{i:>2}. {name:<22} {ct.title} [{ct.param_help}]")
    return "\n".join(lines)


def run_interactive(fed: Federation, role: Role, stdin=None, out=None, export_dir: Path | None = None,
                    limit: int | None = 20) -> int:
    """Menu loop: pick a number, give the "where" parameters, see result_value."""
    stdin = stdin or sys.stdin
    write = (lambda s: out.write(s + "\n")) if out is not None else click.echo
    session = dsp.Session(fed, role)
    n = len(dsp.CONDITION_TYPES)

    def ask(prompt: str) -> str | None:
        write(prompt)
        line = stdin.readline()
        return None if line == "" else line.strip()

    write(f"Session role: {role.name}")
    write(menu_text())
    while True:
        choice = ask(f"Select function (1-{n}, q to quit):")
        if choice is None or choice.lower() in ("q", "quit", "exit"):
            return 0
        if not choice.isdigit() or not 1 <= int(choice) <= n:
            write(f"NOTICE: {dsp.NOTICE_TEXT}")
            write(menu_text())
            continue
        name = dsp.CONDITION_TYPES[int(choice) - 1]
        params = ask(f"{name} parameters:")
        if params is None:
            return 0
        try:
            outcome = session.run(name, params)
        except USER_ERRORS as exc:
            write(f"ERROR: {exc}")
            continue
        if isinstance(outcome, dsp.Notice):
            write(f"NOTICE: {outcome.message}")
            continue
        write(dsp.render_table(outcome, limit=limit))
        if export_dir is not None:
            export_dir.mkdir(parents=True, exist_ok=True)
            dsp.write_result_csv(outcome, export_dir / f"{name}.csv", role)


@cli.command()
@click.option("--export-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Also write each result as <type>.csv here.")
@pass_ctx
def repl(c: Ctx, export_dir) -> int:
    """Interactive numbered menu."""
    return run_interactive(c.fed, c.role, export_dir=export_dir)


def parse_script(text: str) -> list[tuple[int, str, str, str]]:
    """Lines of ``<condition_type> <params> <out_path>`` (shell quoting); ``#`` starts a comment."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            parts = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ScriptSyntax(f"line {lineno}: {exc}") from None
        if len(parts) != 3:
            raise ScriptSyntax(f"line {lineno}: expected 3 fields (type, params, out_path), got {len(parts)}")
        out.append((lineno, *parts))
    return out


def run_batch(fed: Federation, role: Role, script: Path, echo=click.echo) -> int:
    """Run every script line; relative output paths resolve against the script's directory."""
    lines = parse_script(script.read_text(encoding="utf-8"))
    failed = 0
    for lineno, condition_type, params, out_path in lines:
        target = Path(out_path)
        if not target.is_absolute():
            target = script.parent / target
        try:
            outcome = dsp.dispatch(fed, condition_type, params, role)
        except USER_ERRORS as exc:
            echo(f"line {lineno}: FAILED {condition_type}: {exc}")
            failed += 1
            continue
        if isinstance(outcome, dsp.Notice):
            echo(f"line {lineno}: NOTICE {condition_type}: {outcome.message}")
            failed += 1
            continue
        target.parent.mkdir(parents=True, exist_ok=True)
        dsp.write_result_csv(outcome, target, role)
        echo(f"line {lineno}: ok {condition_type} {len(outcome)} rows -> {out_path}")
    return 1 if failed else 0


@cli.command()
@click.argument("script", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@pass_ctx
def batch(c: Ctx, script) -> int:
    """Run a batch script of (condition_type, params, out_path) lines."""
    parse_script(script.read_text(encoding="utf-8"))  # syntax errors before loading data
    return run_batch(c.fed, c.role, script)


@cli.group()
def asset() -> None:
    """Define, materialize, list and delete DHR assets."""


@asset.command("list")
@pass_ctx
def asset_list(c: Ctx) -> int:
    for e in c.assets.list_assets():
        d = e.definition
        state = "not materialized" if not e.materialized else ("stale" if e.stale else "fresh")
        systems = ",".join(s.value for s in SYSTEMS if s in d.source_systems)
        click.echo(f"{d.asset_id}\t{d.condition_type}\t{systems}\t{state}\t{d.title}")
    return 0


@asset.command("define")
@click.option("--id", "asset_id", required=True)
@click.option("--type", "condition_type", required=True)
@click.option("--params", required=True)
@click.option("--title", default="")
@click.option("--owner-role", default=None)
@pass_ctx
def asset_define(c: Ctx, asset_id, condition_type, params, title, owner_role) -> int:
    d = AssetDefinition(asset_id, title or asset_id, frozenset(), condition_type, params,
                        owner_role or c.role.name)
    entry = c.assets.define_asset(d)
    click.echo(f"defined\t{asset_id}\t{entry.definition.condition_type}")
    return 0


@asset.command("materialize")
@click.argument("asset_ids", nargs=-1)
@click.option("--all", "all_assets", is_flag=True)
@pass_ctx
def asset_materialize(c: Ctx, asset_ids, all_assets) -> int:
    store = c.assets
    if all_assets:
        asset_ids = [e.definition.asset_id for e in store.list_assets()]
    if not asset_ids:
        raise click.UsageError("give asset ids or --all")
    failed = 0
    for asset_id in asset_ids:
        try:
            m = store.materialize(asset_id, c.role, c.fed)
        except (AccessDenied, UnknownAssetId) as exc:
            click.echo(f"{asset_id}\tFAILED\t{exc}")
            failed += 1
            continue
        click.echo(f"{asset_id}\t{len(m.table)} rows\t{store.table_path(asset_id)}")
    return 1 if failed else 0


@asset.command("delete")
@click.argument("asset_id")
@pass_ctx
def asset_delete(c: Ctx, asset_id) -> int:
    c.assets.delete_asset(asset_id)
    click.echo(f"deleted\t{asset_id}")
    return 0


_GLOBAL_VALUED = ("--data-dir", "--role", "--roles-file")
_GLOBAL_FLAGS = ("-v", "--verbose")


def hoist_globals(argv: list[str]) -> list[str]:
    """Move global options given after the subcommand to the front, so
    ``fedlink load --data-dir d`` and ``fedlink --data-dir d load`` are equivalent."""
    front: list[str] = []
    rest: list[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--":
            rest.extend(argv[i:])
            break
        if arg in _GLOBAL_VALUED and i + 1 < len(argv):
            front += [arg, argv[i + 1]]
            i += 2
            continue
        if arg.split("=", 1)[0] in _GLOBAL_VALUED and "=" in arg or arg in _GLOBAL_FLAGS:
            front.append(arg)
        else:
            rest.append(arg)
        i += 1
    return front + rest


def main(argv: list[str] | None = None) -> int:
    argv = hoist_globals(list(sys.argv[1:] if argv is None else argv))
    try:
        rv = cli.main(args=argv, prog_name="fedlink", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except USER_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (FedlinkError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())

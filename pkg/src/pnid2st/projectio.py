"""Project assembly: canonical ``.st`` files and PLCopen-TC6-shaped XML.

Exports are gated: nothing is written while any POU still has check errors,
and file sets are written all-or-nothing.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from . import __version__
from .diagnostics import DiagnosticError, has_errors
from .sema import ELEMENTARY, check_unit
from .st import ast
from .st.parser import parse_text
from .st.printer import format_body, format_comment, format_expr, pretty_print

TC6_NS = "http://www.plcopen.org/xml/tc6_0201"
XHTML_NS = "http://www.w3.org/1999/xhtml"
MANIFEST_DATA = "urn:pnid2st:manifest"
ET.register_namespace("", TC6_NS)
ET.register_namespace("xhtml", XHTML_NS)

_SECTION_TAGS = {"VAR": "localVars", "VAR_INPUT": "inputVars", "VAR_OUTPUT": "outputVars",
                 "VAR_IN_OUT": "inOutVars"}
_TAG_SECTIONS = {v: k for k, v in _SECTION_TAGS.items()}
_POU_TYPES = {"PROGRAM": "program", "FUNCTION_BLOCK": "functionBlock"}
_POU_KINDS = {v: k for k, v in _POU_TYPES.items()}
EPOCH = "1970-01-01T00:00:00"


class ExportError(DiagnosticError):
    pass


class ProjectImportError(DiagnosticError):
    pass


@dataclass(frozen=True)
class Artifact:
    """An accepted unit plus where it came from."""

    unit: ast.SourceUnit
    task_kind: str = "manual"
    transcript_id: str = ""


@dataclass
class PouEntry:
    name: str
    kind: str
    source: str = ""


@dataclass
class ProjectManifest:
    name: str
    pous: list[PouEntry] = field(default_factory=list)
    created: str = EPOCH
    cycle_ms: int = 100
    warnings: list[str] = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        return {"name": self.name, "created": self.created, "cycle_ms": self.cycle_ms,
                "pous": [{"name": p.name, "kind": p.kind, "source": p.source} for p in self.pous]}


def _q(tag: str) -> str:
    return f"{{{TC6_NS}}}{tag}"


def _xq(tag: str) -> str:
    return f"{{{XHTML_NS}}}{tag}"


def merged_unit(units: Iterable[ast.SourceUnit]) -> ast.SourceUnit:
    return ast.SourceUnit(tuple(p for u in units for p in u.pous))


def check_project(units: Iterable[ast.SourceUnit]):
    unit = merged_unit(units)
    names = [p.name.upper() for p in unit.pous]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ExportError(f"duplicate POU names: {', '.join(dupes)}")
    _, diags = check_unit(unit)
    if has_errors(diags):
        raise ExportError("refusing to export POUs with errors", diags)
    return unit


# -- .st files ----------------------------------------------------------------

def header_comment(artifact: Artifact) -> ast.Comment:
    text = f" generated by pnid2st; task={artifact.task_kind}"
    if artifact.transcript_id:
        text += f"; transcript={artifact.transcript_id}"
    return ast.Comment(text + " ")


def write_st_files(artifacts: Sequence[Artifact], out_dir: Union[str, Path]) -> list[Path]:
    """One canonical file per POU, named ``<POU>.st``; nothing is written on any failure."""
    out_dir = Path(out_dir)
    check_project(a.unit for a in artifacts)
    planned: list[tuple[Path, str]] = []
    for artifact in artifacts:
        for pou in artifact.unit.pous:
            stamped = replace(pou, comments=(header_comment(artifact),) + pou.comments)
            planned.append((out_dir / f"{pou.name}.st", pretty_print(ast.SourceUnit((stamped,)))))
    lowered = [p.name.lower() for p, _ in planned]
    if len(set(lowered)) != len(lowered):
        raise ExportError("file name collision (names differ only in case)")
    out_dir.mkdir(parents=True, exist_ok=True)
    tmps: list[Path] = []
    try:
        for path, text in planned:
            tmp = path.with_name(f".{path.name}.tmp")
            tmp.write_text(text, encoding="utf-8")
            tmps.append(tmp)
        for (path, _), tmp in zip(planned, tmps):
            os.replace(tmp, path)
    finally:
        for tmp in tmps:
            if tmp.exists():
                tmp.unlink()
    return [p for p, _ in planned]


# -- PLCopen XML export ---------------------------------------------------------

def _doc(parent: ET.Element, comments) -> None:
    if not comments:
        return
    doc = ET.SubElement(parent, _q("documentation"))
    for c in comments:
        ET.SubElement(doc, _xq("p")).text = format_comment(c)[2:-2]


def _type_element(parent: ET.Element, type_name: str) -> None:
    t = ET.SubElement(parent, _q("type"))
    upper = type_name.upper()
    if upper == "STRING":
        ET.SubElement(t, _q("string"))
    elif upper in ELEMENTARY:
        ET.SubElement(t, _q(upper))
    else:
        ET.SubElement(t, _q("derived"), name=type_name)


def _pou_element(parent: ET.Element, pou: ast.Pou, source: str) -> None:
    el = ET.SubElement(parent, _q("pou"), name=pou.name, pouType=_POU_TYPES[pou.kind])
    iface = ET.SubElement(el, _q("interface"))
    for section in pou.sections:
        attrs = {"constant": "true"} if section.constant else {}
        sec = ET.SubElement(iface, _q(_SECTION_TAGS[section.kind]), **attrs)
        for decl in section.decls:
            var = ET.SubElement(sec, _q("variable"), name=decl.name)
            _type_element(var, decl.type_name)
            if decl.init is not None:
                init = ET.SubElement(var, _q("initialValue"))
                ET.SubElement(init, _q("simpleValue"), value=format_expr(decl.init))
            _doc(var, decl.comments)
    body = ET.SubElement(el, _q("body"))
    st = ET.SubElement(body, _q("ST"))
    text = format_body(pou.body)
    if pou.trailing_comments:
        text += "".join(format_comment(c) + "\n" for c in pou.trailing_comments)
    ET.SubElement(st, _xq("p")).text = text
    _doc(el, pou.comments)
    if source:
        add = ET.SubElement(el, _q("addData"))
        data = ET.SubElement(add, _q("data"), name="urn:pnid2st:source", handleUnknown="discard")
        ET.SubElement(data, _q("source"), ref=source)


def export_plcopen(manifest: ProjectManifest, units: Sequence[ast.SourceUnit]) -> str:
    if not manifest.pous:
        raise ExportError("no POUs")
    unit = check_project(units)
    by_name = {p.name.upper(): p for p in unit.pous}
    listed = [e.name.upper() for e in manifest.pous]
    if len(set(listed)) != len(listed):
        raise ExportError("manifest lists a POU twice")
    missing = [e.name for e in manifest.pous if e.name.upper() not in by_name]
    extra = [p.name for p in unit.pous if p.name.upper() not in listed]
    if missing or extra:
        raise ExportError(f"manifest and units disagree: missing={missing} unlisted={extra}")

    root = ET.Element(_q("project"))
    ET.SubElement(root, _q("fileHeader"), companyName="", productName="pnid2st",
                  productVersion=__version__, creationDateTime=manifest.created)
    content = ET.SubElement(root, _q("contentHeader"), name=manifest.name)
    coord = ET.SubElement(content, _q("coordinateInfo"))
    for lang in ("fbd", "ld", "sfc"):
        ET.SubElement(ET.SubElement(coord, _q(lang)), _q("scaling"), x="1", y="1")
    types = ET.SubElement(root, _q("types"))
    ET.SubElement(types, _q("dataTypes"))
    pous = ET.SubElement(types, _q("pous"))
    for entry in manifest.pous:
        pou = by_name[entry.name.upper()]
        if _POU_TYPES[pou.kind] != _POU_TYPES.get(entry.kind, entry.kind):
            raise ExportError(f"manifest kind {entry.kind!r} does not match POU {pou.name} ({pou.kind})")
        _pou_element(pous, pou, entry.source)

    instances = ET.SubElement(root, _q("instances"))
    configs = ET.SubElement(instances, _q("configurations"))
    config = ET.SubElement(configs, _q("configuration"), name="Config0")
    resource = ET.SubElement(config, _q("resource"), name="Res0")
    programs = [by_name[e.name.upper()] for e in manifest.pous if by_name[e.name.upper()].kind == "PROGRAM"]
    if programs:
        task = ET.SubElement(resource, _q("task"), name="MainTask", priority="0",
                             interval=f"T#{manifest.cycle_ms}ms")
        for pou in programs:
            ET.SubElement(task, _q("pouInstance"), name=f"{pou.name}_inst", typeName=pou.name)

    add = ET.SubElement(root, _q("addData"))
    data = ET.SubElement(add, _q("data"), name=MANIFEST_DATA, handleUnknown="discard")
    man = ET.SubElement(data, _q("manifest"), name=manifest.name, created=manifest.created,
                        cycleMs=str(manifest.cycle_ms))
    for entry in manifest.pous:
        ET.SubElement(man, _q("pouRef"), name=entry.name, kind=by_name[entry.name.upper()].kind,
                      source=entry.source)
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def build_manifest(name: str, artifacts: Sequence[Artifact], cycle_ms: int = 100,
                   created: str = EPOCH) -> ProjectManifest:
    pous = [PouEntry(p.name, p.kind, a.transcript_id or a.task_kind) for a in artifacts for p in a.unit.pous]
    return ProjectManifest(name, pous, created, cycle_ms)


# -- PLCopen XML import ---------------------------------------------------------

_KNOWN = {
    "project": {"fileHeader", "contentHeader", "types", "instances", "addData"},
    "types": {"dataTypes", "pous"},
    "pou": {"interface", "body", "documentation", "addData"},
    "interface": set(_TAG_SECTIONS),
    "variable": {"type", "initialValue", "documentation"},
}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _check_children(el: ET.Element, kind: str, warnings: list[str], where: str) -> None:
    for child in el:
        if _local(child.tag) not in _KNOWN[kind]:
            warnings.append(f"ignored unknown element <{_local(child.tag)}> in {where}")


def _doc_comments(el: ET.Element) -> list[str]:
    doc = el.find(_q("documentation"))
    if doc is None:
        return []
    return ["(*" + (p.text or "") + "*)" for p in doc]


def _type_name(var: ET.Element) -> str:
    t = var.find(_q("type"))
    if t is None or len(t) == 0:
        raise ProjectImportError(f"variable {var.get('name')!r} has no type")
    inner = t[0]
    tag = _local(inner.tag)
    if tag == "derived":
        return inner.get("name")
    if tag == "string":
        return "STRING"
    return tag


def _pou_source(el: ET.Element, warnings: list[str]) -> str:
    name = el.get("name")
    kind = _POU_KINDS.get(el.get("pouType", ""))
    if not name or kind is None:
        raise ProjectImportError(f"pou element with unsupported name/pouType: {el.attrib}")
    _check_children(el, "pou", warnings, f"pou {name}")
    lines = _doc_comments(el)
    lines.append(f"{kind} {name}")
    iface = el.find(_q("interface"))
    if iface is not None:
        _check_children(iface, "interface", warnings, f"interface of {name}")
        for sec in iface:
            section = _TAG_SECTIONS.get(_local(sec.tag))
            if section is None:
                continue
            lines.append(section + (" CONSTANT" if sec.get("constant") == "true" else ""))
            for var in sec.findall(_q("variable")):
                _check_children(var, "variable", warnings, f"variable {var.get('name')}")
                lines.extend(_doc_comments(var))
                decl = f"{var.get('name')} : {_type_name(var)}"
                init = var.find(f"{_q('initialValue')}/{_q('simpleValue')}")
                if init is not None:
                    decl += f" := {init.get('value')}"
                lines.append(decl + ";")
            lines.append("END_VAR")
    body = el.find(f"{_q('body')}/{_q('ST')}")
    if body is None:
        raise ProjectImportError(f"pou {name} has no ST body")
    p = body.find(_xq("p"))
    lines.append((p.text or "") if p is not None else (body.text or ""))
    lines.append("END_" + kind)
    return "\n".join(lines) + "\n"


def import_plcopen(document: str) -> tuple[ProjectManifest, list[ast.SourceUnit]]:
    """Rebuild manifest and one unit per POU; unknown elements end up in ``manifest.warnings``."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise ProjectImportError(f"malformed XML: {exc}") from None
    if _local(root.tag) != "project":
        raise ProjectImportError(f"root element is <{_local(root.tag)}>, expected <project>")
    warnings: list[str] = []
    _check_children(root, "project", warnings, "project")
    types = root.find(_q("types"))
    if types is not None:
        _check_children(types, "types", warnings, "types")
    units: list[ast.SourceUnit] = []
    sources: dict[str, str] = {}
    for el in root.iterfind(f"{_q('types')}/{_q('pous')}/{_q('pou')}"):
        text = _pou_source(el, warnings)
        unit, diags = parse_text(text)
        if has_errors(diags):
            raise ProjectImportError(f"ST body of pou {el.get('name')!r} does not parse", diags)
        units.append(unit)
        src = el.find(f"{_q('addData')}/{_q('data')}/{_q('source')}")
        sources[el.get("name").upper()] = src.get("ref", "") if src is not None else ""

    man_el = root.find(f"{_q('addData')}/{_q('data')}[@name='{MANIFEST_DATA}']/{_q('manifest')}")
    content = root.find(_q("contentHeader"))
    header = root.find(_q("fileHeader"))
    if man_el is not None:
        manifest = ProjectManifest(
            man_el.get("name", ""),
            [PouEntry(r.get("name"), r.get("kind"), r.get("source", "")) for r in man_el.findall(_q("pouRef"))],
            man_el.get("created", EPOCH), int(man_el.get("cycleMs", "100")))
    else:
        warnings.append("no pnid2st manifest found; derived from the POU list")
        manifest = ProjectManifest(
            content.get("name", "") if content is not None else "",
            [PouEntry(p.name, p.kind, sources.get(p.name.upper(), "")) for u in units for p in u.pous],
            header.get("creationDateTime", EPOCH) if header is not None else EPOCH)
    manifest.warnings = warnings
    return manifest, units


def write_project(path: Union[str, Path], manifest: ProjectManifest, units: Sequence[ast.SourceUnit]) -> Path:
    path = Path(path)
    text = export_plcopen(manifest, units)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_st_dir(directory: Union[str, Path]) -> list[tuple[Path, ast.SourceUnit]]:
    out = []
    for path in sorted(Path(directory).glob("*.st")):
        unit, diags = parse_text(path.read_text(encoding="utf-8"))
        if has_errors(diags):
            raise ExportError(f"{path} does not parse", diags)
        out.append((path, unit))
    return out


def find_pou(units: Sequence[ast.SourceUnit], name: str) -> Optional[ast.Pou]:
    return merged_unit(units).pou(name)

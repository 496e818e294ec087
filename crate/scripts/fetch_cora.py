#!/usr/bin/env python3
"""Fetch the Cora citation benchmark and convert it to the TSV dataset layout.

Downloads the LINQS distribution (cora.tgz), or converts an already-unpacked
copy passed via --from-dir, and writes:

    datasets/cora/manifest.tsv   one line: nodes, features, classes
    datasets/cora/edges.tsv      one undirected edge per line
    datasets/cora/features.tsv   one node per line, tab-separated 0/1 flags
    datasets/cora/labels.tsv     one class index per line

Node order follows first appearance in cora.content; class indices follow
sorted class-name order. The result is 2708 nodes, 1433 features, 7 classes.
"""

import argparse
import io
import sys
import tarfile
import urllib.request
from pathlib import Path

URL = "https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz"


def read_source(from_dir: Path | None) -> tuple[list[str], list[str]]:
    if from_dir is not None:
        content = (from_dir / "cora.content").read_text().splitlines()
        cites = (from_dir / "cora.cites").read_text().splitlines()
        return content, cites
    print(f"downloading {URL} ...", file=sys.stderr)
    with urllib.request.urlopen(URL) as resp:
        blob = resp.read()
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        def lines(name: str) -> list[str]:
            member = tar.extractfile(f"cora/{name}")
            assert member is not None, f"{name} missing from archive"
            return member.read().decode().splitlines()

        return lines("cora.content"), lines("cora.cites")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--from-dir", type=Path, default=None,
                        help="directory holding cora.content and cora.cites")
    parser.add_argument("--out", type=Path, default=Path("datasets/cora"))
    args = parser.parse_args()

    content, cites = read_source(args.from_dir)

    ids: dict[str, int] = {}
    rows: list[list[str]] = []
    names: list[str] = []
    for line in content:
        parts = line.split()
        if not parts:
            continue
        paper, flags, name = parts[0], parts[1:-1], parts[-1]
        ids[paper] = len(ids)
        rows.append(flags)
        names.append(name)

    classes = sorted(set(names))
    class_id = {c: i for i, c in enumerate(classes)}
    labels = [class_id[n] for n in names]

    edges = []
    for line in cites:
        parts = line.split()
        if len(parts) != 2:
            continue
        cited, citing = parts
        if cited in ids and citing in ids:
            edges.append((ids[citing], ids[cited]))

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    n, d, c = len(rows), len(rows[0]), len(classes)
    (out / "manifest.tsv").write_text(f"{n}\t{d}\t{c}\n")
    (out / "edges.tsv").write_text(
        "".join(f"{u}\t{v}\n" for u, v in edges))
    (out / "features.tsv").write_text(
        "".join("\t".join(flags) + "\n" for flags in rows))
    (out / "labels.tsv").write_text(
        "".join(f"{label}\n" for label in labels))
    print(f"wrote {n} nodes, {len(edges)} edge lines, {d} features, "
          f"{c} classes to {out}")


if __name__ == "__main__":
    main()

"""Convert tools/hierarchy_outline.txt into the packaged nested JSON hierarchy."""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
OUTLINE = ROOT / "tools" / "hierarchy_outline.txt"
TARGET = ROOT / "src" / "semgraph" / "data" / "hierarchy_full.json"


def parse_outline(text):
    stack = []
    root = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        indent = len(line) - len(line.lstrip(" "))
        if indent % 2:
            sys.exit(f"line {lineno}: odd indentation")
        depth = indent // 2
        node = {"name": line.strip(), "children": []}
        if depth == 0:
            if root is not None:
                sys.exit(f"line {lineno}: second root")
            root = node
            stack = [node]
            continue
        if depth > len(stack):
            sys.exit(f"line {lineno}: indentation jumps a level")
        del stack[depth:]
        stack[-1]["children"].append(node)
        stack.append(node)
    return root


def strip_empty(node):
    if not node["children"]:
        del node["children"]
    else:
        for child in node["children"]:
            strip_empty(child)
    return node


if __name__ == "__main__":
    tree = strip_empty(parse_outline(OUTLINE.read_text(encoding="utf-8")))
    TARGET.write_text(json.dumps(tree, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {TARGET}")

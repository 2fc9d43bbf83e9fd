"""Namespace trees and per-entry file attributes.

One tree per NameNode. Entries carry POSIX-style rwx triples, optional
extra ACL entries, and classification tags used by tag-matching policies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import FileExists, NoSuchPath, ParentNotDirectory
from .model import OpKind, PrincipalId

MODE_LETTERS = ((OpKind.READ, "r"), (OpKind.WRITE, "w"), (OpKind.EXECUTE, "x"))


class Effect(Enum):
    ALLOW = "allow"
    DENY = "deny"


@dataclass(frozen=True)
class FileMode:
    """Owner/group/other rwx triples. Admin has no mode bit."""

    owner: frozenset[OpKind]
    group: frozenset[OpKind]
    other: frozenset[OpKind]

    @classmethod
    def parse(cls, text: str) -> "FileMode":
        if len(text) != 9:
            raise ValueError(f"mode must be 9 chars like 'rwxr-x---', got {text!r}")
        triples = []
        for i in range(3):
            chunk = text[3 * i : 3 * i + 3]
            ops = set()
            for (op, letter), ch in zip(MODE_LETTERS, chunk):
                if ch == letter:
                    ops.add(op)
                elif ch != "-":
                    raise ValueError(f"bad mode char {ch!r} in {text!r}")
            triples.append(frozenset(ops))
        return cls(*triples)

    def render(self) -> str:
        out = []
        for triple in (self.owner, self.group, self.other):
            for op, letter in MODE_LETTERS:
                out.append(letter if op in triple else "-")
        return "".join(out)


@dataclass(frozen=True)
class AclEntry:
    principal: PrincipalId
    ops: frozenset[OpKind]
    effect: Effect


@dataclass(frozen=True)
class FileAttrs:
    owner: PrincipalId
    group: PrincipalId
    mode: FileMode
    extra_acl: tuple[AclEntry, ...] = ()


@dataclass
class TreeNode:
    name: str
    is_dir: bool
    attrs: FileAttrs
    children: dict[str, "TreeNode"] = field(default_factory=dict)
    tags: frozenset[str] = frozenset()
    file_id: str | None = None
    size_mb: float = 0.0
    block_ids: tuple[str, ...] = ()


def normalize_path(path: str) -> str:
    """Validate an absolute path with no '.'/'..' components; collapse slashes."""
    if not path.startswith("/"):
        raise ValueError(f"path must be absolute: {path!r}")
    parts = [p for p in path.split("/") if p]
    if any(p in (".", "..") for p in parts):
        raise ValueError(f"path must be normalized: {path!r}")
    return "/" + "/".join(parts)


def split_path(path: str) -> list[str]:
    return [p for p in normalize_path(path).split("/") if p]


class NamespaceTree:
    """Directory/file hierarchy rooted at '/'."""

    def __init__(self, root_attrs: FileAttrs) -> None:
        self.root = TreeNode(name="/", is_dir=True, attrs=root_attrs)

    def lookup(self, path: str) -> TreeNode | None:
        node = self.root
        for part in split_path(path):
            if not node.is_dir:
                return None
            node = node.children.get(part)
            if node is None:
                return None
        return node

    def walk_to(self, path: str) -> tuple[list[tuple[str, TreeNode]], str, TreeNode | None]:
        """Resolve ancestors of `path`.

        Returns (ancestors as [(abs_path, node), ...] including root, final
        component name, final node or None). Raises NoSuchPath when an
        intermediate component is missing or not a directory.
        """
        parts = split_path(path)
        if not parts:
            return [], "/", self.root
        ancestors: list[tuple[str, TreeNode]] = [("/", self.root)]
        node = self.root
        walked = ""
        for part in parts[:-1]:
            walked += "/" + part
            if not node.is_dir:
                raise NoSuchPath(walked)
            child = node.children.get(part)
            if child is None:
                raise NoSuchPath(walked)
            node = child
            ancestors.append((walked, node))
        if not node.is_dir:
            raise NoSuchPath(walked or "/")
        return ancestors, parts[-1], node.children.get(parts[-1])

    def mkdir(self, path: str, attrs: FileAttrs, tags: frozenset[str] = frozenset()) -> TreeNode:
        ancestors, name, existing = self.walk_to(path)
        if name == "/":
            raise FileExists("/")
        if existing is not None:
            raise FileExists(normalize_path(path))
        parent = ancestors[-1][1]
        node = TreeNode(name=name, is_dir=True, attrs=attrs, tags=tags)
        parent.children[name] = node
        return node

    def create_file(
        self,
        path: str,
        attrs: FileAttrs,
        *,
        file_id: str,
        size_mb: float,
        block_ids: tuple[str, ...],
        tags: frozenset[str] = frozenset(),
    ) -> TreeNode:
        ancestors, name, existing = self.walk_to(path)
        if name == "/" or existing is not None:
            raise FileExists(normalize_path(path))
        parent = ancestors[-1][1]
        node = TreeNode(
            name=name,
            is_dir=False,
            attrs=attrs,
            tags=tags,
            file_id=file_id,
            size_mb=size_mb,
            block_ids=block_ids,
        )
        parent.children[name] = node
        return node


def inherit_acl_on_create(parent: TreeNode, creator: PrincipalId) -> FileAttrs:
    """Attributes for a new child: creator owns it, everything else comes
    from the parent directory (group, mode bits, extra ACL entries)."""
    if not parent.is_dir:
        raise ParentNotDirectory(parent.name)
    return FileAttrs(
        owner=creator,
        group=parent.attrs.group,
        mode=parent.attrs.mode,
        extra_acl=parent.attrs.extra_acl,
    )

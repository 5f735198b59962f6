"""In-memory model for OpenAPI documents carrying object-authorization extensions.

The extensions recognized here are:

* ``X-objectAuthScheme``: a ``securitySchemes`` entry that additionally
  declares the token claims used for authorization (``x-groups``,
  ``x-user_id``).
* ``x-objectAuth``: placed on a schema under ``components/schemas``; binds
  the schema's identifier property to the scheme and declares CRUD scopes
  (root-level design).
* ``x-objects``: placed on a path item; a ``$ref`` to a schema's
  ``x-objectAuth`` node (root-level design).
* ``X-objectAuth``: placed directly on an operation, carrying an inline
  ``token`` block and per-action (``C``/``R``/``U``/``D``) scopes
  (method-level design).

Key casing differs between the two designs; the parser accepts any casing and
:func:`emit_document` writes the canonical spelling per placement. Everything
that is not one of these extension nodes is carried opaquely in
:attr:`EssDocument.raw` so documents re-emit losslessly.

See ``docs/extension-reference.md`` for the full grammar.
"""

from __future__ import annotations

import copy
import json
import urllib.parse
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Mapping

import yaml

from .actions import Action, HTTP_VERBS, action_for_key
from .errors import (
    CyclicRefError,
    DanglingRefError,
    DocumentSyntaxError,
    StructureError,
)

# Lowercased spellings of every extension key the parser recognizes.
_KEY_OBJECTS = "x-objects"
_KEY_OBJECT_AUTH = "x-objectauth"
_KEY_GROUPS = "x-groups"
_KEY_USER_ID = "x-user_id"
_SCHEME_NAME = "x-objectauthscheme"

# Canonical spellings on emission.
CANON_OBJECTS = "x-objects"
CANON_OBJECT_AUTH_ROOT = "x-objectAuth"
CANON_OBJECT_AUTH_METHOD = "X-objectAuth"
CANON_GROUPS = "x-groups"
CANON_USER_ID = "x-user_id"
CANON_SCHEME_NAME = "X-objectAuthScheme"


class Placement(str, Enum):
    ROOT_LEVEL = "root_level"
    METHOD_LEVEL = "method_level"


class SchemeKind(str, Enum):
    API_KEY = "apiKey"
    OBJECT_AUTH = "objectAuthScheme"
    OTHER = "other"


def _find_key(node: Mapping[str, Any], lowered: str) -> str | None:
    """Return the actual key in ``node`` whose lowercase form is ``lowered``."""
    for key in node:
        if isinstance(key, str) and key.lower() == lowered:
            return key
    return None


def _escape_pointer(segment: str) -> str:
    return segment.replace("~", "~0").replace("/", "~1")


def _unescape_pointer(segment: str) -> str:
    return segment.replace("~1", "/").replace("~0", "~")


def pointer_for_path(path: str) -> str:
    """Document pointer of a path item, e.g. ``/pet`` -> ``#/paths/~1pet``."""
    return f"#/paths/{_escape_pointer(path)}"


@dataclass(frozen=True)
class SecurityScheme:
    name: str
    kind: SchemeKind
    raw_type: str | None
    location: str | None
    param_name: str | None
    x_groups: str | None
    x_user_id: str | None

    @property
    def is_object_auth(self) -> bool:
        return self.kind is SchemeKind.OBJECT_AUTH


@dataclass(frozen=True)
class ScopeClaims:
    """Type descriptors a scope declares for the token's group and user-id claims."""

    groups: str | None = None
    user_id: str | None = None
    description: str | None = None


@dataclass(frozen=True)
class ScopeSet:
    entries: Mapping[Action, ScopeClaims]
    invalid_keys: tuple[str, ...] = ()

    def actions(self) -> frozenset[Action]:
        return frozenset(self.entries)


@dataclass(frozen=True)
class TokenHint:
    """Inline token block of a method-level binding."""

    type: str | None
    name: str | None
    location: str | None


@dataclass(frozen=True)
class ObjectAuthBinding:
    context: str                    # document pointer of the binding node
    placement: Placement
    object_id_ref: str | None
    scheme_ref: str | None
    token: TokenHint | None
    scopes: ScopeSet
    groups_ref: str | None = None   # root-level scopes.groups / scopes.user_id refs
    user_id_ref: str | None = None
    groups_claim: str | None = None     # descriptors, resolved tolerantly at parse
    user_id_claim: str | None = None

    def structural_key(self) -> str:
        """Fingerprint used to detect structurally identical bindings."""
        payload = {
            "object": self.object_id_ref,
            "scheme": self.scheme_ref,
            "token": None if self.token is None else
                     [self.token.type, self.token.name, self.token.location],
            "scopes": sorted(a.value for a in self.scopes.entries),
            "claims": [self.groups_claim, self.user_id_claim],
        }
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class PathItem:
    path: str
    operations: Mapping[str, Any]           # verb -> opaque operation node
    x_objects_ref: str | None
    bound_schema: str | None                 # schema whose x-objectAuth the ref targets
    method_bindings: Mapping[str, ObjectAuthBinding]  # verb -> binding

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(self.operations)


@dataclass(frozen=True)
class ObjectSchema:
    name: str
    properties: Mapping[str, Any]
    binding: ObjectAuthBinding | None


@dataclass
class EssDocument:
    """Parsed document plus its unmodified tree for lossless re-emission."""

    paths: dict[str, PathItem]
    security_schemes: dict[str, SecurityScheme]
    schemas: dict[str, ObjectSchema]
    raw: dict = field(repr=False)

    def bindings(self) -> list[ObjectAuthBinding]:
        """All bindings in document order: schemas first, then per-operation ones."""
        found = [s.binding for s in self.schemas.values() if s.binding is not None]
        for item in self.paths.values():
            found.extend(item.method_bindings.values())
        return found

    def path_binding(self, path: str) -> ObjectAuthBinding | None:
        """Effective binding of a path: the x-objects target, else the first method one."""
        item = self.paths[path]
        if item.bound_schema is not None:
            schema = self.schemas.get(item.bound_schema)
            if schema is not None and schema.binding is not None:
                return schema.binding
        for verb in item.operations:
            if verb in item.method_bindings:
                return item.method_bindings[verb]
        return None

    def canonical_tree(self) -> dict:
        return canonicalize_tree(self.raw)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EssDocument):
            return NotImplemented
        return self.canonical_tree() == other.canonical_tree()


# ---------------------------------------------------------------------------
# Reference resolution


def resolve_ref(doc: EssDocument, ref: str, base: str | None = None) -> Any:
    """Resolve an intra-document reference to the node it addresses.

    ``ref`` is normally a ``#/``-rooted fragment. A relative reference (no
    leading ``#``) is resolved from ``base``, itself a ``#/``-rooted pointer
    (method-level bindings use this for their object refs). If the addressed
    node is itself a ``{"$ref": ...}`` wrapper the chain is followed;
    revisiting a node raises :class:`CyclicRefError`.
    """
    return _resolve(doc.raw, ref, base)


def _resolve(root: Mapping[str, Any], ref: str, base: str | None = None) -> Any:
    seen: set[str] = set()
    current = ref
    current_base = base
    while True:
        normalized = _absolute_pointer(current, current_base)
        if normalized in seen:
            raise CyclicRefError(current)
        seen.add(normalized)
        node = _walk(root, normalized, original=current)
        if isinstance(node, Mapping) and set(node.keys()) == {"$ref"}:
            current_base = _parent_pointer(normalized)
            current = node["$ref"]
            continue
        return node


def _absolute_pointer(ref: str, base: str | None) -> str:
    if ref.startswith("#"):
        return ref
    if ":" in ref.split("/", 1)[0] and not ref.startswith("#"):
        raise DanglingRefError(ref, f"remote references are not supported: {ref!r}")
    if base is None:
        raise DanglingRefError(ref, f"relative reference {ref!r} used without a base")
    return base.rstrip("/") + "/" + ref.lstrip("/")


def _parent_pointer(pointer: str) -> str:
    trimmed = pointer[2:] if pointer.startswith("#/") else pointer.lstrip("#")
    if not trimmed:
        return "#/"
    parts = trimmed.split("/")[:-1]
    return "#/" + "/".join(parts)


_ESS_SEGMENTS = {_KEY_OBJECTS, _KEY_OBJECT_AUTH, _KEY_GROUPS, _KEY_USER_ID, _SCHEME_NAME}


def _walk(root: Any, pointer: str, original: str) -> Any:
    fragment = urllib.parse.unquote(pointer[1:])
    if fragment in ("", "/"):
        return root
    node = root
    for raw_segment in fragment.lstrip("/").split("/"):
        segment = _unescape_pointer(raw_segment)
        if isinstance(node, Mapping):
            if segment in node:
                node = node[segment]
                continue
            # YAML may have parsed numeric-looking keys as ints.
            if segment.isdigit() and int(segment) in node:
                node = node[int(segment)]
                continue
            # Extension keys match case-insensitively, same as the parser.
            if segment.lower() in _ESS_SEGMENTS:
                actual = _find_key(node, segment.lower())
                if actual is not None:
                    node = node[actual]
                    continue
            raise DanglingRefError(original)
        if isinstance(node, list):
            if segment.isdigit() and int(segment) < len(node):
                node = node[int(segment)]
                continue
            raise DanglingRefError(original)
        raise DanglingRefError(original)
    return node


# ---------------------------------------------------------------------------
# Parsing


def parse_document(text: str, format: str = "yaml") -> EssDocument:
    """Parse serialized YAML/JSON into an :class:`EssDocument`.

    Extension nodes are identified (any key casing) and typed; everything else
    is retained opaquely. Raises :class:`DocumentSyntaxError` for malformed
    text and :class:`StructureError` for non-3.x documents or extension usage
    pointing at sections that do not exist.
    """
    if format not in ("yaml", "json"):
        raise ValueError(f"format must be 'yaml' or 'json', got {format!r}")
    try:
        if format == "json":
            tree = json.loads(text)
        else:
            tree = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise DocumentSyntaxError(f"malformed {format} document: {exc}") from exc
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise StructureError("document root must be a mapping")
    return build_document(tree)


def build_document(tree: dict) -> EssDocument:
    """Build the typed model from an already-parsed document tree."""
    if "swagger" in tree:
        raise StructureError(
            f"unsupported document version swagger={tree['swagger']!r}; "
            "only OpenAPI 3.x documents are accepted")
    version = tree.get("openapi")
    if version is not None and not str(version).startswith("3."):
        raise StructureError(f"unsupported openapi version {version!r}; expected 3.x")

    components = tree.get("components") or {}
    if not isinstance(components, dict):
        raise StructureError("'components' must be a mapping")

    schemes = _parse_security_schemes(components.get("securitySchemes") or {})
    schemas = _parse_schemas(components.get("schemas") or {})
    paths = _parse_paths(tree, schemas)
    return EssDocument(paths=paths, security_schemes=schemes, schemas=schemas, raw=tree)


def _parse_security_schemes(node: Any) -> dict[str, SecurityScheme]:
    if not isinstance(node, dict):
        raise StructureError("'components.securitySchemes' must be a mapping")
    schemes: dict[str, SecurityScheme] = {}
    for name, body in node.items():
        if not isinstance(body, dict):
            raise StructureError(f"security scheme {name!r} must be a mapping")
        groups_key = _find_key(body, _KEY_GROUPS)
        user_id_key = _find_key(body, _KEY_USER_ID)
        raw_type = body.get("type")
        if name.lower() == _SCHEME_NAME or groups_key or user_id_key:
            kind = SchemeKind.OBJECT_AUTH
        elif raw_type == "apiKey":
            kind = SchemeKind.API_KEY
        else:
            kind = SchemeKind.OTHER
        schemes[name] = SecurityScheme(
            name=name,
            kind=kind,
            raw_type=raw_type,
            location=body.get("in"),
            param_name=body.get("name"),
            x_groups=_descriptor(body.get(groups_key)) if groups_key else None,
            x_user_id=_descriptor(body.get(user_id_key)) if user_id_key else None,
        )
    return schemes


def _descriptor(node: Any) -> str | None:
    """Normalize a claim type declaration: scalar, ``{type: X}``, or None."""
    if node is None:
        return None
    if isinstance(node, str):
        return node
    if isinstance(node, dict):
        if "type" in node:
            return str(node["type"])
        if "$ref" in node:
            return None  # resolved separately, against the full tree
    return str(node)


def _parse_schemas(node: Any) -> dict[str, ObjectSchema]:
    if not isinstance(node, dict):
        raise StructureError("'components.schemas' must be a mapping")
    schemas: dict[str, ObjectSchema] = {}
    for name, body in node.items():
        binding = None
        if isinstance(body, dict):
            auth_key = _find_key(body, _KEY_OBJECT_AUTH)
            if auth_key is not None:
                context = f"#/components/schemas/{_escape_pointer(name)}/{auth_key}"
                binding = _parse_binding(body[auth_key], context, Placement.ROOT_LEVEL)
        properties = body.get("properties", {}) if isinstance(body, dict) else {}
        schemas[name] = ObjectSchema(name=name, properties=properties, binding=binding)
    return schemas


def _parse_paths(tree: dict, schemas: dict[str, ObjectSchema]) -> dict[str, PathItem]:
    node = tree.get("paths") or {}
    if not isinstance(node, dict):
        raise StructureError("'paths' must be a mapping")
    paths: dict[str, PathItem] = {}
    for path, body in node.items():
        if not isinstance(path, str) or not path.startswith("/"):
            raise StructureError(f"path template {path!r} must begin with '/'")
        if not isinstance(body, dict):
            raise StructureError(f"path item {path!r} must be a mapping")
        operations = {verb: node for verb, node in body.items()
                      if verb in HTTP_VERBS}
        method_bindings: dict[str, ObjectAuthBinding] = {}
        for verb, op in operations.items():
            if not isinstance(op, dict):
                continue
            auth_key = _find_key(op, _KEY_OBJECT_AUTH)
            if auth_key is not None:
                context = f"{pointer_for_path(path)}/{verb}/{auth_key}"
                method_bindings[verb] = _parse_binding(
                    op[auth_key], context, Placement.METHOD_LEVEL)

        x_objects_ref = None
        bound_schema = None
        objects_key = _find_key(body, _KEY_OBJECTS)
        if objects_key is not None:
            ref_node = body[objects_key]
            if isinstance(ref_node, dict) and "$ref" in ref_node:
                x_objects_ref = ref_node["$ref"]
            elif isinstance(ref_node, str):
                x_objects_ref = ref_node
            else:
                raise StructureError(
                    f"{path}: '{objects_key}' must be a $ref to a schema's "
                    f"object-authorization node")
            # Fail fast: a path cannot be linked to its binding if this dangles.
            target = _resolve(tree, x_objects_ref)
            bound_schema = _schema_of_binding_node(tree, target)
        paths[path] = PathItem(
            path=path,
            operations=operations,
            x_objects_ref=x_objects_ref,
            bound_schema=bound_schema,
            method_bindings=method_bindings,
        )
    return paths


def _schema_of_binding_node(tree: dict, target: Any) -> str | None:
    """Find which schema's x-objectAuth node ``target`` is (identity match)."""
    components = tree.get("components") or {}
    for name, body in (components.get("schemas") or {}).items():
        if not isinstance(body, dict):
            continue
        auth_key = _find_key(body, _KEY_OBJECT_AUTH)
        if auth_key is not None and body[auth_key] is target:
            return name
    return None


def _parse_binding(node: Any, context: str, placement: Placement) -> ObjectAuthBinding:
    if not isinstance(node, dict):
        raise StructureError(f"{context}: binding must be a mapping")

    object_id_ref = None
    obj = node.get("object")
    if isinstance(obj, dict):
        if "$ref" in obj:
            object_id_ref = obj["$ref"]
        elif isinstance(obj.get("schema"), dict) and "$ref" in obj["schema"]:
            object_id_ref = obj["schema"]["$ref"]

    scheme_ref = None
    scheme_node = node.get("schema")
    if isinstance(scheme_node, dict) and "$ref" in scheme_node:
        scheme_ref = scheme_node["$ref"]

    token = None
    token_node = node.get("token")
    if isinstance(token_node, dict):
        token = TokenHint(
            type=token_node.get("type"),
            name=token_node.get("name"),
            location=token_node.get("in"),
        )

    scopes, groups_ref, user_id_ref = _parse_scopes(node.get("scopes"))
    return ObjectAuthBinding(
        context=context,
        placement=placement,
        object_id_ref=object_id_ref,
        scheme_ref=scheme_ref,
        token=token,
        scopes=scopes,
        groups_ref=groups_ref,
        user_id_ref=user_id_ref,
        groups_claim=None,
        user_id_claim=None,
    )


def _parse_scopes(node: Any) -> tuple[ScopeSet, str | None, str | None]:
    """Parse either scope shape.

    Root-level: ``{groups: .., user_id: .., methods: {verb: {description}}}``
    (claims shared across the actions listed under ``methods``).
    Method-level: ``{C: {groups: .., user_id: ..}, R: ..., U: ..., D: ...}``.
    """
    if not isinstance(node, dict):
        return ScopeSet(entries={}), None, None

    groups_ref = _ref_of(node.get("groups"))
    user_id_ref = _ref_of(node.get("user_id"))

    entries: dict[Action, ScopeClaims] = {}
    invalid: list[str] = []
    methods = node.get("methods")
    if isinstance(methods, dict):
        shared_groups = _descriptor(node.get("groups"))
        shared_user_id = _descriptor(node.get("user_id"))
        for key, body in methods.items():
            action = action_for_key(str(key))
            if action is None:
                invalid.append(str(key))
                continue
            description = body.get("description") if isinstance(body, dict) else None
            entries[action] = ScopeClaims(
                groups=shared_groups, user_id=shared_user_id, description=description)
    else:
        for key, body in node.items():
            if key in ("groups", "user_id"):
                continue
            action = action_for_key(str(key))
            if action is None:
                invalid.append(str(key))
                continue
            if isinstance(body, dict):
                entries[action] = ScopeClaims(
                    groups=_descriptor(body.get("groups")),
                    user_id=_descriptor(body.get("user_id")),
                    description=body.get("description"),
                )
            else:
                entries[action] = ScopeClaims()
    return ScopeSet(entries=entries, invalid_keys=tuple(invalid)), groups_ref, user_id_ref


def _ref_of(node: Any) -> str | None:
    if isinstance(node, dict) and "$ref" in node:
        return node["$ref"]
    return None


def resolved_claims(doc: EssDocument, binding: ObjectAuthBinding) -> ScopeClaims:
    """Effective (groups, user_id) claim descriptors of a binding.

    Direct per-scope declarations win; root-level ``$ref`` declarations are
    chased into the scheme. Unresolvable refs yield ``None`` here; the
    validator reports them.
    """
    groups = user_id = None
    for claims in binding.scopes.entries.values():
        groups = groups or claims.groups
        user_id = user_id or claims.user_id
    if groups is None and binding.groups_ref:
        groups = _try_resolve_descriptor(doc, binding.groups_ref)
    if user_id is None and binding.user_id_ref:
        user_id = _try_resolve_descriptor(doc, binding.user_id_ref)
    return ScopeClaims(groups=groups, user_id=user_id)


def _try_resolve_descriptor(doc: EssDocument, ref: str) -> str | None:
    try:
        node = resolve_ref(doc, ref)
    except (DanglingRefError, CyclicRefError):
        return None
    return _descriptor(node)


# ---------------------------------------------------------------------------
# Emission


def emit_document(doc: EssDocument, format: str = "yaml") -> str:
    """Serialize the document; extension keys get their canonical spelling."""
    tree = doc.canonical_tree()
    if format == "json":
        return json.dumps(tree, indent=2) + "\n"
    if format == "yaml":
        return yaml.safe_dump(tree, sort_keys=False, allow_unicode=True, width=100)
    raise ValueError(f"format must be 'yaml' or 'json', got {format!r}")


def canonicalize_tree(tree: dict) -> dict:
    """Copy of the document tree with extension keys in canonical casing."""
    out = copy.deepcopy(tree)

    components = out.get("components")
    if isinstance(components, dict):
        schemes = components.get("securitySchemes")
        if isinstance(schemes, dict):
            for name in list(schemes):
                body = schemes[name]
                if isinstance(body, dict):
                    _rename_ci(body, _KEY_GROUPS, CANON_GROUPS)
                    _rename_ci(body, _KEY_USER_ID, CANON_USER_ID)
                if isinstance(name, str) and name.lower() == _SCHEME_NAME \
                        and name != CANON_SCHEME_NAME:
                    _rename_key(schemes, name, CANON_SCHEME_NAME)
        schemas = components.get("schemas")
        if isinstance(schemas, dict):
            for body in schemas.values():
                if isinstance(body, dict):
                    _rename_ci(body, _KEY_OBJECT_AUTH, CANON_OBJECT_AUTH_ROOT)

    paths = out.get("paths")
    if isinstance(paths, dict):
        for item in paths.values():
            if not isinstance(item, dict):
                continue
            _rename_ci(item, _KEY_OBJECTS, CANON_OBJECTS)
            for verb in HTTP_VERBS:
                op = item.get(verb)
                if isinstance(op, dict):
                    _rename_ci(op, _KEY_OBJECT_AUTH, CANON_OBJECT_AUTH_METHOD)

    _canonicalize_refs(out)
    return out


def _rename_ci(node: dict, lowered: str, canonical: str) -> None:
    actual = _find_key(node, lowered)
    if actual is not None and actual != canonical:
        _rename_key(node, actual, canonical)


def _rename_key(node: dict, old: str, new: str) -> None:
    """Rename preserving the key's position in the mapping."""
    items = [(new, v) if k == old else (k, v) for k, v in node.items()]
    node.clear()
    node.update(items)


_SEGMENT_CANON = {
    _KEY_OBJECT_AUTH: CANON_OBJECT_AUTH_ROOT,   # ref targets are always schema-rooted
    _KEY_OBJECTS: CANON_OBJECTS,
    _KEY_GROUPS: CANON_GROUPS,
    _KEY_USER_ID: CANON_USER_ID,
    _SCHEME_NAME: CANON_SCHEME_NAME,
}


def _canonicalize_refs(node: Any) -> None:
    if isinstance(node, dict):
        for key, value in node.items():
            if key == "$ref" and isinstance(value, str):
                node[key] = _canonicalize_ref_string(value)
            else:
                _canonicalize_refs(value)
    elif isinstance(node, list):
        for value in node:
            _canonicalize_refs(value)


def _canonicalize_ref_string(ref: str) -> str:
    segments = ref.split("/")
    return "/".join(_SEGMENT_CANON.get(s.lower(), s) for s in segments)


def document_refs(doc: EssDocument) -> Iterator[str]:
    """Every $ref string in the document, in traversal order."""

    def scan(node: Any) -> Iterator[str]:
        if isinstance(node, dict):
            for key, value in node.items():
                if key == "$ref" and isinstance(value, str):
                    yield value
                else:
                    yield from scan(value)
        elif isinstance(node, list):
            for value in node:
                yield from scan(value)

    yield from scan(doc.raw)

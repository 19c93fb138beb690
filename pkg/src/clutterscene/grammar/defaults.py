"""The shipped clutter grammar, rendered from a catalog into DSL text."""

from __future__ import annotations

from importlib import resources

from ..physics.catalog import Catalog, CatalogError
from ..scenegraph import NUM_ORIENTATIONS
from .dsl import parse_rule_set
from .rules import RuleSet

STRUCTURAL = """\
rule drop_object {
  lhs { node t: Tray; }
  rhs { node t; node s: ObjectSlot; edge t->s: Primitive; }
  keep t;
}

rule stack_object {
  lhs { node p: ObjectSlot|Object(*)|MetaGroup(*); }
  rhs { node p; node s: ObjectSlot; edge p->s: Primitive; }
  keep p;
}

rule end {
  lhs { node s: ObjectSlot; }
  rhs { node s: End; }
  keep s;
}
"""

# Filler that rounds the grammar to its published size; rewrites nothing.
NOOP = """\
rule noop {
  lhs { node o: Object(*); }
  rhs { node o; }
  keep o;
}
"""


def render_rules(catalog: Catalog) -> str:
    parts = ["# generated from the object catalog; one insertion rule per class\n", STRUCTURAL]
    for name in catalog.object_names:
        parts.append(
            f"rule insert_{name} {{\n"
            f"  lhs {{ node s: ObjectSlot; }}\n"
            f"  rhs {{ node s: Object({name}); }}\n"
            f"  keep s;\n}}\n"
        )
    for meta in catalog.metas:
        members = "".join(f" node m{i}: Object({c});" for i, c in enumerate(meta.members))
        edges = "".join(f" edge s->m{i}: Member;" for i in range(len(meta.members)))
        parts.append(
            f"rule insert_meta_{meta.name} {{\n"
            f"  lhs {{ node s: ObjectSlot; }}\n"
            f"  rhs {{ node s: MetaGroup({meta.name});{members}{edges} }}\n"
            f"  keep s;\n}}\n"
        )
    for k in range(NUM_ORIENTATIONS):
        parts.append(
            f"rule orient_{k} {{\n"
            f"  lhs {{ node a: Any; node b: Any; edge a->b: Primitive; }}\n"
            f"  rhs {{ node a; node b; edge a->b: Orientation({k}); }}\n"
            f"  keep a, b;\n}}\n"
        )
    parts.append(NOOP)
    return "\n".join(parts)


def default_rule_set(catalog: Catalog) -> RuleSet:
    for meta in catalog.metas:
        for member in meta.members:
            if member not in catalog.object_names:
                raise CatalogError(f"meta rule {meta.name} references missing class {member}")
    return parse_rule_set(render_rules(catalog), object_names=catalog.object_names,
                          meta_names=catalog.meta_names)


def shipped_rules_text(extended: bool = False) -> str:
    name = "extended.rules" if extended else "default.rules"
    return resources.files("clutterscene.data").joinpath(name).read_text()

"""Walk through the network description layer by layer.

Builds the default architecture, audits every parameter count against the
bundled reference table, and prints the full feature-map trace for both
skip merge modes.  Finishes with a spec-file round trip.
"""

import tempfile

from cupdisc.netspec import (
    audit_against_tables,
    default_network_spec,
    infer_shapes,
    load_spec,
    save_spec,
    total_parameter_count,
)

# The add-mode network reproduces the reference table exactly.
spec = default_network_spec(skip_mode="add")
audit = audit_against_tables(spec)
print(audit.format())
print()

# Each pooling layer hands its argmax indices to exactly one unpooling
# layer, first-in-last-out; the trace shows the resolutions meeting up.
print("feature-map trace (add skips):")
print(infer_shapes(spec).format())
print()

# Concatenation skips double the channels entering each decoder
# convolution, so those five rows deviate from the table by design.
concat = default_network_spec(skip_mode="concat")
concat_audit = audit_against_tables(concat)
deviating = [r.name for r in concat_audit.deviations]
print(f"concat mode deviations: {', '.join(deviating)}")
print(f"add    mode total: {total_parameter_count(spec):>9,} parameters")
print(f"concat mode total: {total_parameter_count(concat):>9,} parameters")
print()

# The spec serializes to a line-oriented text file; the fingerprint ties
# checkpoints to the architecture they were trained from.
with tempfile.NamedTemporaryFile("w", suffix=".txt") as fh:
    save_spec(spec, fh.name)
    reloaded = load_spec(fh.name)
assert reloaded == spec
print(f"spec round trip ok, fingerprint {spec.fingerprint()[:16]}...")

"""Tour of the hierarchical partition: addressing, geometry, refinement.

Run with:  python3 demos/01_partition_tour.py
"""
import numpy as np

from fedelim import BoxDomain, NodeId, PartitionSpec, ROOT, cell, children, node_containing, parent, representative

spec = PartitionSpec(arity=2)
unit = BoxDomain([0.0], [1.0])

print("=== binary tree addresses ===")
print("root:", ROOT)
print("children of the root:", children(ROOT, spec))
print("children of (1,2):", children(NodeId(1, 2), spec))
print("parent of (2,3):", parent(NodeId(2, 3), spec))

print()
print("=== cells of [0,1] down the right spine ===")
node = ROOT
for _ in range(5):
    box = cell(unit, node, spec)
    mid = representative(unit, node, spec)
    print(f"{node}: [{box.lower[0]:.5f}, {box.upper[0]:.5f}]  center {mid[0]:.5f}")
    node = children(node, spec)[-1]

print()
print("=== a 2-D domain splits one dimension per depth, cyclically ===")
square = BoxDomain([-5.0, -5.0], [5.0, 5.0])
for node in [ROOT, NodeId(1, 2), NodeId(2, 4), NodeId(3, 8), NodeId(4, 16)]:
    box = cell(square, node, spec)
    print(f"{node}: x in [{box.lower[0]:+.2f}, {box.upper[0]:+.2f}], "
          f"y in [{box.lower[1]:+.2f}, {box.upper[1]:+.2f}]")

print()
print("=== locating points ===")
for x in (0.1, 0.5, 0.9):
    for depth in (3, 6):
        node = node_containing(unit, [x], depth, spec)
        box = cell(unit, node, spec)
        print(f"x={x} at depth {depth} -> {node} "
              f"[{box.lower[0]:.4f}, {box.upper[0]:.4f}]")

print()
print("cell widths shrink geometrically: depth 20 width =",
      cell(unit, NodeId(20, 1), spec).widths[0])

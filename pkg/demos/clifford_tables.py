"""Clifford algebra bookkeeping: classification, the epsilon objects and sigma groups.

Prints the computed matrix-algebra type of C^{p,q} for small p + q next to the
tabulated value, the period-8 pattern of the charge-conjugation objects, and
checks the anticommutator of an explicit sigma representation.
"""

from lageom import clifford as cl

print("p q   computed   listed")
for r in cl.printed_table_comparison():
    flag = "" if r["agree"] else "   <- differs"
    print(f"{r['p']} {r['q']}   {r['computed']:<9s}  {r['printed']}{flag}")

print("\n n  n mod 8  class  ranks(+,-)")
for e in cl.epsilon_table(16):
    rec = e.as_record()
    print(f"{rec['n']:>2d}  {rec['residue']:>7d}  {rec['measured_class']}  ({rec['rank_plus']}, {rec['rank_minus']})")

rep = cl.build_sigma(cl.Signature.from_counts(2, 1, 1, 1))
print("\nanticommutation residual for signature (2,1 | 1,1):", cl.anticommutation_residual(rep))

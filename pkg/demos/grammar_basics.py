"""
Grammar files, derivations, and the genotype they leave behind
==============================================================

A search space is a plain-text grammar.  Deriving from it records, per
nonterminal, which alternative was taken and which terminal values were
sampled; that record IS the genotype, and decoding replays it.
"""

import numpy as np

from evopower.grammar import (
    bind_dynamic_bound,
    decode,
    load_packaged_grammar,
    parse_grammar,
    random_derivation,
    repair,
)

# a miniature layer grammar: one dense layer with a unit count and an
# activation choice, written exactly like the packaged files
text = """
<layer>      ::= layer:dense [units,int,1,16,256] <activation>
<activation> ::= act:relu | act:sigmoid
"""
g = parse_grammar(text)
print("nonterminals:", sorted(g.rules))

rng = np.random.default_rng(7)
genes = random_derivation(g, "layer", rng)
print("expansion choices:", genes.choices)
print("sampled values:   ", genes.values)

decoded = decode(g, "layer", genes)
print("decoded attributes:", decoded.attrs)

# the same gene list always decodes to the same phenotype
print("decode is pure:", decode(g, "layer", genes).attrs == decoded.attrs)

# flip the activation choice and repair; the untouched unit value
# survives because repair reuses every gene it can
genes.choices["activation"][0] = 1 - genes.choices["activation"][0]
fixed = repair(g, "layer", genes, rng)
print("after the flip:   ", decode(g, "layer", fixed).attrs)

# the packaged search space also carries a dynamic bound: the split
# point's upper limit depends on the individual's hidden layer count,
# so it is bound per individual before deriving
full = load_packaged_grammar("default")
bound = bind_dynamic_bound(full, 3)
mp = random_derivation(bound, "middle_point", rng)
print("split point drawn for 5 hidden layers:", decode(bound, "middle_point", mp).attrs)

"""
One policy for every destination split
======================================

Balls start in room s and must reach room a or room b; the only action pushes
a ball between two rooms. Solving with one root per family member gives a
single policy covering the all-a, mixed and all-b splits.
"""

from bagplan import corpus, abstract, solve, refine, execute, explore, validate, ground
from bagplan.refinement import FamilySpec, abstract_qstate, generate_family

task = corpus.load("push-prob1-1")
res = abstract(task)
splits = [(0, 5), (2, 3), (5, 0)]
members = [generate_family(FamilySpec(task, {"st1": a, "st2": b}), res.mapping.subtypes)
           for a, b in splits]

roots = [abstract_qstate(res.mapping, m) for m in members]
sol = solve(res.problem, roots=roots)
program = refine(sol.policy, res.problem, res.mapping)
print("\n".join(program.describe()))

for (a, b), m in zip(splits, members):
    g = ground(m)
    run = execute(program, g, chooser="random", seed=0)
    every = explore(program, g).all_branches_reach_goal
    print(f"{a} to a, {b} to b: {len(run.plan)} pushes, valid={validate(run.plan, g).valid}, "
          f"every choice works={every}")

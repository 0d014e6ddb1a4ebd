"""
From a PDDL gripper task to a program for every ball count
===========================================================

Abstract the bundled Gripper-Sim task, solve the abstraction once, refine the
policy into a guarded program and run that program on resized copies.
"""

from bagplan import corpus, abstract, solve, refine, execute, validate, ground
from bagplan.refinement import FamilySpec, generate_family

task = corpus.load("gripper-sim-prob1-1")
res = abstract(task)

# the statistics of the abstraction: 4 counters, 2 robot-location flags, 6 actions
print({k: res.stats[k] for k in ("subtypes", "numeric", "boolean", "ops")})
for c in res.mapping.counters:
    print(" ", c.id, "=", c.name)

# one policy over qualitative states (counter = 0 or > 0)
sol = solve(res.problem)
print(sol.outcome.value, "after", sol.nodes, "search nodes;", sol.verdict.reason)

program = refine(sol.policy, res.problem, res.mapping)
for line in program.describe()[:4]:
    print(" ", line)

# the same program on instances with more balls and fewer grippers
for balls, grippers in [(2, 1), (8, 2), (20, 1)]:
    member = generate_family(FamilySpec(task, {"st2": balls, "st1": grippers}),
                             res.mapping.subtypes)
    g = ground(member)
    run = execute(program, g)
    print(f"{balls:>3} balls, {grippers} gripper(s): {run.verdict}, "
          f"{len(run.plan)} steps, valid={validate(run.plan, g).valid}")

#include "promptopt/refiner.hpp"

#include "promptopt/util.hpp"

namespace promptopt {
namespace {

// Kept in the same shape as the demonstration embedded in the
// strategy-generation meta-prompt: task prompt, a worked example with the
// wrong and reference answers, the distilled experience, and the strategy
// that addresses it. One demo per error family.

const char* kCalculationDemo = R"DEMO(<demo>
<prompt>solve the multi-step arithmetic problem and choose the matching option.</prompt>

<example>
question: Ellen bought 12 boxes of markers with 8 markers in each box. She gave 30 markers to her class and lost 5. How many markers does Ellen have left?
Options:
(A) 61
(B) 66
(C) 96
(D) 56
Answer: (B) 66
Target: (A) 61
</example>

<experience>
Errors often come from performing the arithmetic operations in the wrong order or dropping one of the intermediate quantities before the final comparison with the options
</experience>

<strategy>
Here is a strategy guide how to achieve "carrying every intermediate quantity through the calculation":
1. Write down each quantity mentioned in the question together with the operation that links it to the running total.
2. Compute one operation at a time and record the intermediate result before moving to the next step.
3. After the final operation, restate the question to confirm the computed value answers what was actually asked.
4. Compare the final value against every option and pick the exact match rather than the closest one.
</strategy>
</demo>)DEMO";

const char* kMisreadingDemo = R"DEMO(<demo>
<prompt>answer the reading comprehension question using only facts stated in the passage.</prompt>

<example>
question: The museum opens at nine and closes at five, except on Thursdays when it stays open until eight. Admission is free after four. Rita arrives at half past four on a Thursday. How long can she stay?
Options:
(A) half an hour
(B) three and a half hours
(C) one hour
(D) four hours
Answer: (A) half an hour
Target: (B) three and a half hours
</example>

<experience>
One primary reason mistakes occur is that conditions attached to special cases in the question are dropped, so the default case is applied even when the special case holds
</experience>

<strategy>
Here is a strategy guide how to achieve "applying the correct case when the question contains exceptions":
1. List every rule in the question and mark which ones are defaults and which ones are exceptions.
2. Extract the concrete facts about the situation being asked about.
3. Check each exception against the facts before falling back to the default rule.
4. Derive the answer from the selected rule and verify it does not contradict any stated fact.
</strategy>
</demo>)DEMO";

}  // namespace

DemoLibrary DemoLibrary::builtin() {
  DemoLibrary lib;
  lib.id_ = "builtin-v1";
  lib.demos_ = {kCalculationDemo, kMisreadingDemo};
  return lib;
}

std::string DemoLibrary::additional_demos() const {
  return join(demos_, "\n\n");
}

}  // namespace promptopt

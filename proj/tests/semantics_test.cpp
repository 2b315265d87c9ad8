#include <doctest.h>

#include "support.h"

using namespace trv;
using namespace trv::testing;

TEST_CASE("symbolic and concrete evaluation agree per operator") {
  std::uint64_t seed = 11;
  for (auto& c : operator_cases()) {
    CAPTURE(c.name);
    RewriteRule rule = parse_rule_text(c.json);
    OracleStats st = semantics_oracle(rule, 100, seed++);
    CAPTURE(st.first_failure);
    CHECK(st.failures == 0);
    CHECK(st.valid >= 100);
    MESSAGE(c.name << ": " << st.valid << " compared, " << st.rejected << " rejected by both");
  }
}

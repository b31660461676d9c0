#pragma once

#include <sstream>
#include <string>

#include "msm/core.hpp"

namespace msm::fixtures {

// A: 0->1 at 1, 1->2 at 4; B: 0->2 at 2; C: censored in 0 at 3.
inline const char* d1_text =
    "id,from,to,entry,exit\n"
    "A,0,1,0,1\n"
    "A,1,2,1,4\n"
    "B,0,2,0,2\n"
    "C,0,cens,0,3\n";

// D1 with A entering at 1.5, already in state 1.
inline const char* d1_truncated_text =
    "id,from,to,entry,exit\n"
    "A,1,2,1.5,4\n"
    "B,0,2,0,2\n"
    "C,0,cens,0,3\n";

inline Dataset d1() {
    std::istringstream in(d1_text);
    return ingest_long_format(in, StateSpace::illness_death());
}

inline Dataset d1_truncated() {
    std::istringstream in(d1_truncated_text);
    return ingest_long_format(in, StateSpace::illness_death());
}

}  // namespace msm::fixtures

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "study/evidence.hpp"

namespace testing {

// The block exactly as teachers write it.
inline const std::string kVerbatimBlock =
    "SIACUastart\n"
    " level=1; slip= 0.2; guess=0.25; discr = 0.3\n"
    " concepts = [(D, 0.6), (I, 0.4)]\n"
    " SIACUAend\n";

// Spacing, separator, ordering and marker-case variants of the same block.
inline std::vector<std::string> block_variants() {
  return {
      "SIACUAstart level=1; slip= 0.2; guess=0.25; discr = 0.3 concepts = [(D, 0.6), (I, 0.4)] SIACUAend",
      "SIACUAstart\nlevel=1\nslip=0.2\nguess=0.25\ndiscr=0.3\nconcepts=[(D,0.6),(I,0.4)]\nSIACUAend",
      "SIACUAstart level=1;slip=0.2;guess=0.25;discr=0.3;concepts=[(D,0.6),(I,0.4)] SIACUAend",
      "SIACUAstart\n\tlevel = 1 ;\tslip = 0.2 ;\n\tguess = 0.25 ; discr = 0.3 ;\n\tconcepts = [ ( D , 0.6 ) , ( I , 0.4 ) ]\nSIACUAend",
      "SIACUAstart guess=0.25; level=1; discr=0.3; slip=0.2; concepts=[(D, 0.6), (I, 0.4)] SIACUAend",
      "SIACUAstart concepts = [(D, 0.6), (I, 0.4)]; discr = 0.3; guess = 0.25; slip = 0.2; level = 1 SIACUAend",
      "SIACUAstart slip=0.2\n\n\nlevel=1\r\nguess=0.25\r\ndiscr=0.3\r\nconcepts=[(D, 0.6), (I, 0.4)]\r\nSIACUAend",
      "siacuastart level=1; slip= 0.2; guess=0.25; discr = 0.3 concepts = [(D, 0.6), (I, 0.4)] siacuaend",
      "SIACUASTART level=1; slip= 0.2; guess=0.25; discr = 0.3 concepts = [(D, 0.6), (I, 0.4)] SIACUAEND",
      "SIACUAstart level=1; slip=.2; guess=.25; discr=.3 concepts=[(D, .6), (I, .4)] SIACUAend",
      "SIACUAstart level=1; slip=0.20; guess=0.250; discr=0.30 concepts=[(D, 0.60), (I, 0.40)] SIACUAend",
      "SIACUAstart level=1; slip=2e-1; guess=25e-2; discr=3e-1 concepts=[(D, 6e-1), (I, 4e-1)] SIACUAend",
      "SIACUAstart level=1; slip=0.2; guess=0.25; discr=0.3; concepts=[(D, 0.6), (I, 0.4)]; SIACUAend",
      "   SIACUAstart   level=1;   slip=0.2;   guess=0.25;   discr=0.3   concepts=[(D, 0.6),   (I, 0.4)]   SIACUAend   ",
      "SIACUAstart\n level=1; slip= 0.2\n guess=0.25; discr = 0.3\n concepts = [(D, 0.6),\n              (I, 0.4)]\n SIACUAend",
      "SIACUAstart level=1 slip=0.2 guess=0.25 discr=0.3 concepts=[(D, 0.6), (I, 0.4)] SIACUAend",
      "SIACUAstart discr=0.3;level=1\nconcepts=[(D,0.6),(I,0.4)]\nslip=0.2;guess=0.25 SIACUAend",
      "SIACUAstart level=+1; slip=+0.2; guess=+0.25; discr=+0.3 concepts=[(D, +0.6), (I, +0.4)] SIACUAend",
      "%% parameters for the checker\nSIACUAstart level=1; slip= 0.2; guess=0.25; discr = 0.3 concepts = [(D, 0.6), (I, 0.4)] SIACUAend\n",
      "SIACUAstart level = 1 ; slip = 0.2 ; guess = 0.25 ; discr = 0.3 ; concepts = [ (D,0.6), (I,0.4) ] SIACUAend",
  };
}

struct MalformedCase {
  std::string text;
  study::SiacuaError::Code code;
  std::string key;
};

inline std::vector<MalformedCase> malformed_blocks() {
  using C = study::SiacuaError::Code;
  return {
      {"level=1; slip=0.2; guess=0.25; discr=0.3 concepts=[(D, 0.6), (I, 0.4)] SIACUAend", C::missing_start_marker, ""},
      {"SIACUAstart level=1; slip=0.2; guess=0.25; discr=0.3 concepts=[(D, 0.6), (I, 0.4)]", C::missing_end_marker, ""},
      {"SIACUAstart level=1; slip=0.2; discr=0.3 concepts=[(D, 0.6), (I, 0.4)] SIACUAend", C::missing_key, "guess"},
      {"SIACUAstart level=1; slip=abc; guess=0.25; discr=0.3 concepts=[(D, 0.6), (I, 0.4)] SIACUAend", C::non_numeric, "slip"},
      {"SIACUAstart level=1; slip=0.2; guess=0.25; discr=0.3 concepts=[] SIACUAend", C::empty_concepts, "concepts"},
      {"SIACUAstart level=1; slip=0.2; guess=0.25; discr=0.3 concepts=[(D, 0.6), (I, 0.5)] SIACUAend", C::weight_sum, "concepts"},
      {"SIACUAstart level=1; level=2; slip=0.2; guess=0.25; discr=0.3 concepts=[(D, 1)] SIACUAend", C::duplicate_key, "level"},
      {"SIACUAstart level=1; slip=0.2; guess=0.25; discr=0.3; bonus=2 concepts=[(D, 1)] SIACUAend", C::unknown_key, "bonus"},
      {"SIACUAstart level=7; slip=0.2; guess=0.25; discr=0.3 concepts=[(D, 1)] SIACUAend", C::out_of_range, "level"},
      {"SIACUAstart level=1; slip=0.2; guess=0.25; discr=0.3 concepts=[(D 0.6), (I, 0.4)] SIACUAend", C::malformed, "concepts"},
  };
}

}  // namespace testing

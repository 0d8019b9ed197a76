#include "kwave/fixtures.hpp"

#include <map>

namespace kwave {

namespace {

const std::map<std::string, std::string>& registry() {
  static const std::map<std::string, std::string> fixtures{
      {"brownian", R"json({
  "name": "brownian",
  "independent": ["t", "x"],
  "dependent": ["a", "c"],
  "parameters": ["beta"],
  "parameter_values": {"beta": 1},
  "A": [
    [["0", "0"], ["0", "-1"]],
    [["0", "1 + beta^2*x^2"], ["1", "0"]]
  ],
  "b": ["a", "0"],
  "analysis": {
    "domain": "t=0:1,x=-1:1,a=0.5:2,c=-1:1",
    "stages": ["homogenize"],
    "homogenize": {"new_variable": "y"},
    "seed": 1
  }
}
)json"},
      {"trautman", R"json({
  "name": "trautman",
  "independent": ["t", "x"],
  "dependent": ["v0", "v1", "u"],
  "parameters": ["k"],
  "parameter_values": {"k": 1},
  "A": [
    [["1", "0", "0"], ["0", "0", "1"], ["0", "0", "0"]],
    [["0", "-1", "0"], ["0", "0", "0"], ["0", "0", "1"]]
  ],
  "b": ["-k^2*u", "v0", "v1"],
  "analysis": {
    "domain": "t=0:1,x=0:1,v0=-1:1,v1=-1:1,u=0.5:2",
    "stages": ["homogenize"],
    "homogenize": {"new_variable": "xh"},
    "seed": 1
  }
}
)json"},
      {"example2", R"json({
  "name": "example2",
  "independent": ["t", "x", "y"],
  "dependent": ["u1", "u2"],
  "parameters": [],
  "A": [
    [["1", "0"], ["0", "1"]],
    [["0", "x"], ["x*u2", "0"]],
    [["0", "y*u1"], ["y", "0"]]
  ],
  "b": ["0", "0"],
  "analysis": {
    "domain": "t=1:3,x=1:3,y=0.2:0.9,u1=0.1:1.7,u2=0.5:3.5",
    "grid": "t=1:3:20,x=1:3:20,y=0.2:0.9:20",
    "stages": ["homogenize", "elements", "conditions", "rescale", "solve", "verify"],
    "seed": 1,
    "waves": [
      {"label": "plus", "lambda": ["1", "0", "-1/(y*sqrt(u1))"], "gamma": ["sqrt(u1)", "1"],
       "potential_gauge": "sqrt(u1)"},
      {"label": "minus", "lambda": ["1", "0", "1/(y*sqrt(u1))"], "gamma": ["-sqrt(u1)", "1"],
       "potential_gauge": "-sqrt(u1)"}
    ],
    "hodograph": {
      "parameters": ["tp", "tm"],
      "mu": [["1/2", "0"], ["0", "1/2"]],
      "base": [4, 0],
      "ansatz": ["((tp - tm)/4)^2", "(tp + tm)/2"],
      "box": "tp=3:5,tm=-1:1",
      "step": 0.01
    },
    "solver": {"guess": "base"},
    "verify": {"expected_xi": [0.5, 0.5]}
  }
}
)json"},
      {"example3", R"json({
  "name": "example3",
  "independent": ["t", "x", "y"],
  "dependent": ["u"],
  "parameters": ["c", "m", "k"],
  "parameter_values": {"c": 1, "m": 1, "k": 1},
  "A": [
    [["1"]],
    [["x*u"]],
    [["y*u^2"]]
  ],
  "b": ["0"],
  "analysis": {
    "domain": "t=0.1:1,x=1:3,y=1:3,u=-14:-1",
    "grid": "t=0.1:1:10,x=1:3:10,y=1:3:10",
    "stages": ["homogenize", "elements", "conditions", "rescale", "solve", "verify"],
    "seed": 1,
    "waves": [
      {"label": "R", "lambda": ["-(m*u + k*u^2)", "m/x", "k/y"], "gamma": ["c"]}
    ],
    "hodograph": {
      "parameters": ["s"],
      "base": [0],
      "u0": [0],
      "box": "s=-16:1",
      "step": 0.001
    },
    "solver": {"guess": "explicit", "initial": [-100]},
    "verify": {"richardson": true, "fd_step": 1e-4}
  }
}
)json"},
  };
  return fixtures;
}

}  // namespace

std::vector<std::string> fixture_names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

const std::string& fixture_text(const std::string& name) {
  auto it = registry().find(name);
  if (it == registry().end()) throw Error("unknown fixture '" + name + "'");
  return it->second;
}

SystemFile load_fixture(const std::string& name) { return parse_system_file(fixture_text(name)); }

}  // namespace kwave

#pragma once

#include <string>
#include <vector>

// Positional arguments given to the test binary (doctest options excluded).
extern std::vector<std::string> test_args;

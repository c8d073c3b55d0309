#include <catch2/catch_amalgamated.hpp>

#include "survkit/survkit.hpp"

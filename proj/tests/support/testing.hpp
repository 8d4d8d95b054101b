#pragma once

// Shared doctest entry point. Each test binary compiles exactly one
// translation unit that defines DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN before
// including this header; all others include it plain.
#include "doctest.h"

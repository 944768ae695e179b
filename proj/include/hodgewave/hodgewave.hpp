#pragma once

#include "hodgewave/runner.hpp"

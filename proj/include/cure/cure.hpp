#pragma once

#include "cure/client.hpp"
#include "cure/datasets.hpp"
#include "cure/domain.hpp"
#include "cure/engine.hpp"
#include "cure/errors.hpp"
#include "cure/evalharness.hpp"
#include "cure/prompts.hpp"

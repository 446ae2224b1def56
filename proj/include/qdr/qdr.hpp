#pragma once

#include "qdr/dataio.hpp"
#include "qdr/dynamic.hpp"
#include "qdr/errors.hpp"
#include "qdr/inference.hpp"
#include "qdr/parallel.hpp"
#include "qdr/policy.hpp"
#include "qdr/report.hpp"
#include "qdr/rng.hpp"
#include "qdr/rule.hpp"
#include "qdr/search.hpp"
#include "qdr/simgen.hpp"
#include "qdr/survival.hpp"
#include "qdr/value.hpp"

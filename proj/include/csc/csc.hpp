#pragma once

#include "csc/chardata.hpp"
#include "csc/config.hpp"
#include "csc/decoder.hpp"
#include "csc/distortion.hpp"
#include "csc/error.hpp"
#include "csc/eval.hpp"
#include "csc/lexicon_index.hpp"
#include "csc/lm.hpp"
#include "csc/log.hpp"
#include "csc/remote_lm.hpp"
#include "csc/service.hpp"
#include "csc/utf8.hpp"

#pragma once

// Everything except the HTTP layer (service.hpp), which pulls in httplib.

#include "panelscope/agreement.hpp"
#include "panelscope/checkpoint.hpp"
#include "panelscope/classifier.hpp"
#include "panelscope/clustering.hpp"
#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/features.hpp"
#include "panelscope/feedback_loop.hpp"
#include "panelscope/io.hpp"
#include "panelscope/label.hpp"
#include "panelscope/log.hpp"
#include "panelscope/seqmine.hpp"
#include "panelscope/session_store.hpp"

#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "sgr.h"

int main(void) {
    const char *log =
        "{\"session_id\":\"s1\",\"queries\":["
        "{\"query_id\":\"q1\",\"text\":\"red shoes\",\"timestamp\":1,\"candidates\":["
        "{\"doc_id\":\"d1\",\"text\":\"red shoes shop\",\"click\":1},"
        "{\"doc_id\":\"d2\",\"text\":\"weather\",\"click\":0}]},"
        "{\"query_id\":\"q2\",\"text\":\"running shoes\",\"timestamp\":5,\"candidates\":["
        "{\"doc_id\":\"d3\",\"text\":\"running shoes\",\"click\":1}]}]}\n";

    printf("version: %s\n", sgr_version());

    SgrSessions *sessions = NULL;
    assert(sgr_sessions_parse(log, &sessions) == SgrStatus_Ok);
    size_t count = 0;
    assert(sgr_sessions_count(sessions, &count) == SgrStatus_Ok && count == 1);

    SgrGraph *graph = NULL;
    assert(sgr_graph_build(sessions, 0, 2, &graph) == SgrStatus_Ok);
    size_t nodes = 0, edges = 0;
    sgr_graph_node_count(graph, &nodes);
    sgr_graph_edge_count(graph, &edges);
    printf("graph: %zu nodes, %zu edges\n", nodes, edges);
    assert(nodes == 3 && edges == 2);

    char *text = NULL;
    assert(sgr_graph_to_text(graph, -1, &text) == SgrStatus_Ok);
    printf("symbolic: %s\n", text);
    SgrGraph *reparsed = NULL;
    assert(sgr_graph_from_text(text, &reparsed) == SgrStatus_Ok);
    sgr_string_free(text);

    char *run = NULL;
    assert(sgr_rank_mock(sessions, 0, 2, 7, -1, "capi", &run) == SgrStatus_Ok);
    printf("run lines:\n%s", run);
    sgr_string_free(run);

    /* scripted failure: bad grammar must set a readable error */
    SgrGraph *bad = NULL;
    assert(sgr_graph_from_text("(q1, a) <eats> (q2, b)", &bad) == SgrStatus_GrammarError);
    char *msg = sgr_last_error_message();
    assert(msg != NULL && strstr(msg, "eats") != NULL);
    printf("error surface: %s\n", msg);
    sgr_string_free(msg);

    double v = 0.0;
    assert(sgr_link_loss(0.5, 1, &v) == SgrStatus_Ok);
    assert(fabs(v - 0.6931471805599453) < 1e-12);

    const char *runtext = "q Q0 a 1 0.9 t\nq Q0 b 2 0.8 t\n";
    const char *qrels = "q 0 b 1\n";
    size_t ks[2] = {1, 3};
    char *report = NULL;
    assert(sgr_evaluate(runtext, qrels, ks, 2, &report) == SgrStatus_Ok);
    printf("report: %.80s...\n", report);
    sgr_string_free(report);

    sgr_graph_free(graph);
    sgr_graph_free(reparsed);
    sgr_sessions_free(sessions);
    puts("C ABI check: OK");
    return 0;
}

#include <stdio.h>
#include <string.h>

#include "visagent.h"

int main(void) {
    int32_t index = -2;
    if (visagent_match_option("Final Answer: (B)", "[\"near\", \"far\"]", &index) != VISAGENT_STATUS_OK || index != 1) {
        fprintf(stderr, "match_option returned %d\n", index);
        return 1;
    }
    if (visagent_match_option(NULL, "[]", &index) != VISAGENT_STATUS_NULL_ARGUMENT || visagent_last_error() == NULL) {
        fprintf(stderr, "null argument not reported\n");
        return 1;
    }
    char *json = NULL;
    if (visagent_parse_turn("Thought: hm\nFinal Answer: (A)", &json) != VISAGENT_STATUS_OK) {
        return 1;
    }
    int terminal = strstr(json, "\"terminal\":true") != NULL;
    visagent_string_free(json);
    if (!terminal) {
        fprintf(stderr, "turn not terminal\n");
        return 1;
    }
    printf("ok %s\n", visagent_version());
    return 0;
}

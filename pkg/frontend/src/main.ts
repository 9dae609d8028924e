import { ApiClient } from "./api";
import { init } from "./app";

// same-origin in production; the dev server proxies to the Python service
void init(document, new ApiClient(""));

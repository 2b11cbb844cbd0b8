// coinminer: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (probe_host(arg) == 0) {
        return -1;
    }
    v1 = spawn_worker(arg);
    if (pool_session(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t probe_host(void *arg)
{
    int32_t v1 = 0;
    if (GetSystemInfo(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t spawn_worker(void *arg)
{
    int32_t v1 = 0;
    if (CreateProcessA(arg) == 0) {
        return -1;
    }
    v1 = SetPriorityClass(arg);
    return v1;
}

int32_t pool_session(void *arg)
{
    int32_t v1 = 0;
    if (WSAStartup(arg) == 0) {
        return -1;
    }
    v1 = connect(arg);
    if (send(arg) == 0) {
        return -1;
    }
    v1 = recv(arg);
    return v1;
}

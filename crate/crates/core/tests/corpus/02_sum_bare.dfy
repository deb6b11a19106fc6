method Sum(n: int) returns (s: int)
{
    var i := 0;
    s := 0;
    while i <= n
    {
        s := s + i;
        i := i + 1;
    }
}

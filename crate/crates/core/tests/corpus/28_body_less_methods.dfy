method {:extern} External(x: int) returns (y: int)
  ensures y >= x

method Wrapper(x: int) returns (y: int)
  ensures y >= x
{
  y := External(x);
}

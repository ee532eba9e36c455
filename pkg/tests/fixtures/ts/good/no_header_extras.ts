@classLabel true pos neg
@data
1,2,3:pos
4,5,6:neg

7,8,9:pos
